#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "model_fixtures.hpp"
#include "semparse/error.hpp"
#include "semparse/gradcheck.hpp"

using namespace semparse;
using namespace semparse::testing;

namespace {

std::vector<int> with_end(std::vector<int> tokens) {
  tokens.push_back(Vocabulary::kEnd);
  return tokens;
}

std::vector<int> random_target(Rng& rng, int vocab, int max_len) {
  std::vector<int> t = random_input(rng, vocab - Vocabulary::kNumSpecials, 1, max_len);
  for (int& v : t) v += Vocabulary::kNumSpecials;
  return with_end(t);
}

bool well_formed(const TreeDecodeResult& r) {
  for (const IdLevelSequence& seq : r.sequences) {
    if (seq.tokens.size() < 2) return false;
    for (int tok : seq.tokens) {
      if (tok < Vocabulary::kNumSpecials && tok != Vocabulary::kEnd &&
          tok != Vocabulary::kNonterminal) {
        return false;
      }
    }
  }
  return !r.truncated;
}

}  // namespace

TEST_CASE("parameter layout") {
  ModelConfig cfg{10, 7, 3, 4, 2, DecoderKind::kTree, true};
  ModelParameters m(cfg);
  CHECK(m.decoder_input_dim() == 7);
  CHECK(m.decoder_layers[0].input_dim() == 7);
  CHECK(m.decoder_layers[1].input_dim() == 4);
  CHECK(m.encoder_layers[0].input_dim() == 3);
  CHECK(m.output_projection.rows() == 7);
  CHECK(m.parameters().size() == 2 + 3 * 2 + 3 * 2 + 1 + 2);
  CHECK(&m.encoder_layers[0].input_weights != &m.decoder_layers[0].input_weights);

  cfg.attention = false;
  cfg.decoder = DecoderKind::kSequence;
  ModelParameters plain(cfg);
  CHECK(plain.decoder_input_dim() == 3);
  CHECK(plain.parameters().size() == 2 + 6 + 6 + 1);

  cfg.num_layers = 0;
  CHECK_THROWS_AS(ModelParameters{cfg}, ConfigError);
  CHECK(decoder_kind_from_string("seq2tree") == DecoderKind::kTree);
  CHECK_THROWS_AS(decoder_kind_from_string("graph"), ConfigError);
}

TEST_CASE("encoder") {
  ModelConfig cfg{6, 6, 3, 4, 2, DecoderKind::kSequence, true};
  ModelParameters zero(cfg);
  EncoderOutput enc = encode(zero, std::vector<int>{1, 2, 3});
  CHECK(enc.top_hiddens.isZero());
  CHECK(enc.top_hiddens.cols() == 3);
  CHECK(encode(zero, std::vector<int>{4}).top_hiddens.cols() == 1);
  CHECK_THROWS_AS(encode(zero, std::vector<int>{}), InputError);
  CHECK_THROWS_AS(encode(zero, std::vector<int>{6}), VocabularyError);

  Rng rng(1, RngStream::kTest);
  ModelParameters m = random_model({.layers = 2, .input_vocab = 6, .output_vocab = 6}, rng);
  std::vector<int> in{0, 5, 2};
  EncoderOutput a = encode(m, in), b = encode(m, in);
  CHECK(a.top_hiddens == b.top_hiddens);
  ref::Encoded<double> r = ref::encode(m, in);
  for (int k = 0; k < 3; ++k) {
    for (int j = 0; j < 4; ++j) CHECK(std::abs(a.top_hiddens(j, k) - r.tops[k][j]) < 1e-12);
  }
}

TEST_CASE("attention") {
  EncoderOutput enc;
  enc.top_hiddens.resize(2, 2);
  enc.top_hiddens << 1, 0, 0, 1;
  Vec q(2);
  q << 1, 0;
  AttentionResult a = attend(q, enc);
  const double e = std::exp(1.0);
  CHECK(a.scores[0] == doctest::Approx(e / (e + 1)));
  CHECK(a.scores[1] == doctest::Approx(1 / (e + 1)));

  EncoderOutput one;
  one.top_hiddens.resize(2, 1);
  one.top_hiddens << 0.3, -0.7;
  a = attend(q, one);
  CHECK(a.scores[0] == 1.0);
  CHECK(a.context == Vec(one.top_hiddens.col(0)));

  EncoderOutput ortho;
  ortho.top_hiddens.resize(3, 4);
  ortho.top_hiddens.setZero();
  ortho.top_hiddens.row(1).setRandom();
  Vec q3(3);
  q3 << 1, 0, 2;
  a = attend(q3, ortho);
  for (int k = 0; k < 4; ++k) CHECK(a.scores[k] == doctest::Approx(0.25));
}

TEST_CASE("predict distribution") {
  ModelConfig cfg{5, 7, 3, 4, 1, DecoderKind::kSequence, true};
  ModelParameters zero(cfg);
  EncoderOutput enc = encode(zero, std::vector<int>{1, 2});
  Vec p = predict_distribution(zero, initial_decoder_state(zero, enc), enc);
  for (int k = 0; k < 7; ++k) CHECK(p[k] == doctest::Approx(1.0 / 7));

  Rng rng(2, RngStream::kTest);
  for (bool attention : {true, false}) {
    for (int trial = 0; trial < 10; ++trial) {
      ModelParameters m = random_model({.attention = attention, .layers = 2}, rng);
      std::vector<int> in = random_input(rng, 9, 1, 5);
      EncoderOutput e = encode(m, in);
      DecoderState s = decoder_step(m, initial_decoder_state(m, e), Vocabulary::kStart);
      Vec got = predict_distribution(m, s, e);
      ref::Encoded<double> re = ref::encode(m, in);
      ref::V<double> want =
          ref::distribution(m, ref::step(m, re.final_state, Vocabulary::kStart), re);
      CHECK(std::abs(got.sum() - 1.0) < 1e-6);
      for (int k = 0; k < 8; ++k) CHECK(std::abs(got[k] - want[k]) < 1e-12);
    }
  }
}

TEST_CASE("sequence likelihood") {
  ModelConfig cfg{5, 4, 3, 4, 1, DecoderKind::kSequence, true};
  ModelParameters zero(cfg);
  std::vector<int> target{3, 1, Vocabulary::kEnd};
  CHECK(seq_log_prob(zero, std::vector<int>{1, 2}, target) ==
        doctest::Approx(3 * std::log(0.25)));
  CHECK_THROWS_AS(seq_log_prob(zero, std::vector<int>{1}, std::vector<int>{4, 2}),
                  VocabularyError);
  CHECK_THROWS_AS(seq_log_prob(zero, std::vector<int>{1}, std::vector<int>{3}),
                  StructureError);

  Rng rng(3, RngStream::kTest);
  for (int trial = 0; trial < 20; ++trial) {
    ModelParameters m = random_model({.attention = trial % 2 == 0, .layers = 1 + trial % 3}, rng);
    std::vector<int> in = random_input(rng, 9, 1, 6);
    std::vector<int> tgt = random_target(rng, 8, 6);
    const double lp = seq_log_prob(m, in, tgt);
    CHECK(lp <= 0.0);
    CHECK(std::abs(lp - ref::seq_log_prob(m, in, tgt)) < 1e-10);
  }
}

TEST_CASE("tree likelihood") {
  Vocabulary vocab = toy_vocab(3);
  ModelConfig cfg{5, static_cast<int>(vocab.size()), 3, 4, 1, DecoderKind::kTree, true};

  SUBCASE("uniform model") {
    ModelConfig small = cfg;
    small.output_vocab_size = Vocabulary::kNumSpecials;
    ModelParameters zero(small);
    EncodedTree t{{0, -1, -1, {3, 1, 2}}, {1, 0, 0, {1, 2}}};
    CHECK(tree_log_prob(zero, std::vector<int>{1}, t) == doctest::Approx(5 * std::log(0.2)));
  }

  SUBCASE("leaf-only tree equals the flat sequence") {
    Rng rng(4, RngStream::kTest);
    ModelParameters m = random_model({.decoder = DecoderKind::kTree, .output_vocab = 8}, rng);
    std::vector<int> in{1, 2, 3};
    LfTree t = parse_lf("t0 t1 t2");
    std::vector<int> flat = vocab.encode_strict(Tokens{"t0", "t1", "t2", "</s>"});
    CHECK(tree_log_prob(m, in, encode_tree(t, vocab)) == doctest::Approx(seq_log_prob(m, in, flat)));
  }

  SUBCASE("two-pass oracle for A B (C)") {
    Rng rng(5, RngStream::kTest);
    ModelParameters m = random_model({.decoder = DecoderKind::kTree, .output_vocab = 8}, rng);
    std::vector<int> in{4, 0, 7};
    EncodedTree t = encode_tree(parse_lf("t0 t1 (t2)"), vocab);
    REQUIRE(t.size() == 2);
    EncoderOutput enc = encode(m, in);
    DecoderState s = initial_decoder_state(m, enc);
    double total = 0.0;
    int prev = Vocabulary::kStart;
    DecoderState at_n;
    for (int tok : t[0].tokens) {
      s = decoder_step(m, s, prev);
      total += std::log(predict_distribution(m, s, enc)[tok]);
      if (tok == Vocabulary::kNonterminal) at_n = s;
      prev = tok;
    }
    DecoderState c = child_decoder_state(at_n);
    prev = Vocabulary::kSubtreeStart;
    for (int tok : t[1].tokens) {
      c = decoder_step(m, c, prev);
      total += std::log(predict_distribution(m, c, enc)[tok]);
      prev = tok;
    }
    CHECK(std::abs(tree_log_prob(m, in, t) - total) < 1e-12);
  }

  SUBCASE("depth cap") {
    ModelParameters zero(cfg);
    EncodedTree t = encode_tree(parse_lf("(t0 (t1 (t2)))"), vocab);
    CHECK_NOTHROW(tree_log_prob(zero, std::vector<int>{1}, t, {}, 4));
    CHECK_THROWS_AS(tree_log_prob(zero, std::vector<int>{1}, t, {}, 3), StructureError);
  }

  SUBCASE("random trees against the reference") {
    Rng rng(6, RngStream::kTest);
    Vocabulary v5 = toy_vocab(5);
    for (int trial = 0; trial < 20; ++trial) {
      ModelParameters m = random_model({.decoder = DecoderKind::kTree,
                                        .attention = trial % 2 == 0,
                                        .layers = 1 + trial % 2,
                                        .output_vocab = 10},
                                       rng);
      std::vector<int> in = random_input(rng, 9, 1, 5);
      EncodedTree t = encode_tree(random_tree(rng, v5, 4), v5);
      CHECK(std::abs(tree_log_prob(m, in, t) - ref::tree_log_prob(m, in, t)) < 1e-10);
    }
  }
}

TEST_CASE("gradients match finite differences") {
  Rng rng(8, RngStream::kGradCheck);
  Vocabulary v5 = toy_vocab(5);
  for (int layers : {1, 2}) {
    for (bool attention : {true, false}) {
      CAPTURE(layers);
      CAPTURE(attention);
      ModelParameters seq = random_model({.attention = attention, .layers = layers, .output_vocab = 10}, rng);
      std::vector<int> in = random_input(rng, 9, 2, 5);
      std::vector<int> tgt = random_target(rng, 10, 5);
      nn::zero_grads(seq.parameters());
      seq_loss_and_gradients(seq, in, tgt);
      auto seq_loss = [&] { return -ref::seq_log_prob<long double>(seq, in, tgt); };
      CHECK(nn::finite_difference_check(seq_loss, seq.parameters(), 100, 1e-5, rng)
                .max_relative_error < 1e-4);

      ModelParameters tree = random_model(
          {.decoder = DecoderKind::kTree, .attention = attention, .layers = layers, .output_vocab = 10}, rng);
      EncodedTree t = encode_tree(parse_lf("t0 (t1 (t2 t3) t4) (t0)"), v5);
      nn::zero_grads(tree.parameters());
      tree_loss_and_gradients(tree, in, t);
      auto tree_loss = [&] { return -ref::tree_log_prob<long double>(tree, in, t); };
      nn::GradCheckResult tr = nn::finite_difference_check(tree_loss, tree.parameters(), 100, 1e-5, rng);
      CAPTURE(tr.worst_parameter);
      CHECK(tr.max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("dropout in the training pass") {
  Rng rng(9, RngStream::kTest);
  ModelParameters m = random_model({.layers = 2}, rng);
  std::vector<int> in{1, 2, 3};
  std::vector<int> tgt{5, 6, Vocabulary::kEnd};
  Rng d1(1, RngStream::kDropout), d2(1, RngStream::kDropout);
  const double a = seq_log_prob(m, in, tgt, {0.5, &d1});
  const double b = seq_log_prob(m, in, tgt, {0.5, &d2});
  CHECK(a == b);
  CHECK(a != seq_log_prob(m, in, tgt));
  CHECK(seq_log_prob(m, in, tgt, {0.0, &d1}) == seq_log_prob(m, in, tgt));
}

TEST_CASE("greedy decoding") {
  Rng rng(10, RngStream::kTest);
  for (int trial = 0; trial < 20; ++trial) {
    ModelParameters m = random_model({.attention = trial % 2 == 0, .scale = 1.0}, rng);
    std::vector<int> in = random_input(rng, 9, 1, 6);
    SeqDecodeResult r = greedy_decode_seq(m, in, 8);
    CHECK(r.tokens.size() <= 8);
    CHECK(greedy_decode_seq(m, in, 8).tokens == r.tokens);
    CHECK(greedy_decode_seq(m, in, 1).tokens.size() <= 1);
    for (const Vec& row : r.attention.rows) CHECK(std::abs(row.sum() - 1.0) < 1e-6);
    if (!r.truncated) {
      CHECK(r.log_prob == doctest::Approx(seq_log_prob(m, in, with_end(r.tokens))));
    }
    // local argmax: every emitted token beats every alternative at its step
    EncoderOutput enc = encode(m, in);
    DecoderState s = initial_decoder_state(m, enc);
    int prev = Vocabulary::kStart;
    for (int tok : r.tokens) {
      s = decoder_step(m, s, prev);
      Vec p = predict_distribution(m, s, enc);
      CHECK(p[tok] == p.maxCoeff());
      prev = tok;
    }
  }
  Vec tie(3);
  tie << 0.2, 0.4, 0.4;
  CHECK(argmax(tie) == 1);
}

TEST_CASE("beam search") {
  Rng rng(11, RngStream::kTest);
  SUBCASE("beam one is greedy") {
    for (int trial = 0; trial < 30; ++trial) {
      ModelParameters m = random_model({.attention = trial % 2 == 0, .scale = 1.0}, rng);
      std::vector<int> in = random_input(rng, 9, 1, 6);
      SeqDecodeResult g = greedy_decode_seq(m, in, 10);
      SeqDecodeResult b = beam_decode_seq(m, in, 1, 10);
      CHECK(g.tokens == b.tokens);
      CHECK(g.truncated == b.truncated);
      CHECK(g.attention.rows.size() == b.attention.rows.size());
    }
  }

  SUBCASE("exhaustive two-step oracle") {
    const int vocab = 6;
    for (int trial = 0; trial < 20; ++trial) {
      ModelParameters m = random_model({.output_vocab = vocab, .scale = 1.5}, rng);
      std::vector<int> in = random_input(rng, 9, 1, 4);
      double best = -1e300;
      std::vector<int> best_tokens;
      auto consider = [&](std::vector<int> tokens) {
        const double lp = seq_log_prob(m, in, with_end(tokens));
        if (lp > best) {
          best = lp;
          best_tokens = tokens;
        }
      };
      consider({});
      for (int a = 0; a < vocab; ++a) {
        if (a != Vocabulary::kEnd) consider({a});
      }
      SeqDecodeResult full = beam_decode_seq(m, in, vocab * vocab, 2);
      REQUIRE_FALSE(full.truncated);
      CHECK(full.tokens == best_tokens);
      CHECK(full.log_prob == doctest::Approx(best));

      SeqDecodeResult narrow = beam_decode_seq(m, in, vocab, 2);
      CHECK(narrow.log_prob <= best + 1e-12);
      if (!narrow.truncated) {
        CHECK(narrow.log_prob == doctest::Approx(seq_log_prob(m, in, with_end(narrow.tokens))));
      }
    }
  }

  CHECK_THROWS_AS(beam_decode_seq(ModelParameters({3, 6, 2, 2, 1, DecoderKind::kSequence, true}),
                                  std::vector<int>{1}, 0, 5),
                  ConfigError);
}

TEST_CASE("tree decoding") {
  Rng rng(12, RngStream::kTest);
  Vocabulary vocab = toy_vocab(3);
  int multi_level = 0;
  for (int trial = 0; trial < 60; ++trial) {
    ModelParameters m = random_model({.decoder = DecoderKind::kTree,
                                      .attention = trial % 3 != 0,
                                      .layers = 1 + trial % 2,
                                      .scale = 1.0},
                                     rng);
    m.output_projection.value.row(Vocabulary::kNonterminal) *= 3.0;
    std::vector<int> in = random_input(rng, 9, 1, 6);
    TreeDecodeOptions opts{12, 4, 40, true};
    TreeDecodeResult batched = decode_tree(m, in, opts);
    opts.batched = false;
    TreeDecodeResult sequential = decode_tree(m, in, opts);
    CHECK(batched.sequences == sequential.sequences);
    CHECK(batched.truncated == sequential.truncated);
    REQUIRE(batched.attention.rows.size() == sequential.attention.rows.size());
    for (std::size_t k = 0; k < batched.attention.rows.size(); ++k) {
      CHECK((batched.attention.rows[k] - sequential.attention.rows[k]).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(std::abs(batched.attention.rows[k].sum() - 1.0) < 1e-6);
    }
    if (batched.sequences.size() > 1) ++multi_level;
    LfTree t = assemble_tree(batched, vocab);
    CHECK(t.depth() <= opts.max_depth);
    CHECK(batched.sequences.size() <= static_cast<std::size_t>(opts.max_nodes));
    for (std::size_t k = 0; k < batched.sequences.size(); ++k) {
      CHECK(batched.sequences[k].node_id == static_cast<int>(k));
    }
    if (well_formed(batched)) {
      CHECK(encode_tree(t, vocab) == batched.sequences);
    }
  }
  CHECK(multi_level > 10);

  ModelParameters seq({3, 6, 2, 2, 1, DecoderKind::kSequence, true});
  CHECK_THROWS_AS(decode_tree(seq, std::vector<int>{1}), ConfigError);
}

TEST_CASE("assemble tree fills gaps") {
  Vocabulary vocab = toy_vocab(2);
  TreeDecodeResult r;
  r.sequences = {{0, -1, -1, {5, 3, 3}}, {1, 0, 1, {Vocabulary::kEnd}}};
  LfTree t = assemble_tree(r, vocab);
  CHECK(serialize_lf(t) == "t0 (<empty>) <trunc>");
}

TEST_CASE("beam width monotonicity" * doctest::may_fail()) {
  Rng rng(13, RngStream::kTest);
  int violations = 0;
  int comparable = 0;
  for (int trial = 0; trial < 200; ++trial) {
    ModelParameters m = random_model({.attention = trial % 2 == 0, .scale = 1.0}, rng);
    std::vector<int> in = random_input(rng, 9, 1, 6);
    double prev = -1e300;
    bool prev_finished = false;
    for (int beam : {1, 2, 4}) {
      SeqDecodeResult r = beam_decode_seq(m, in, beam, 10);
      if (!r.truncated && prev_finished) {
        ++comparable;
        if (r.log_prob < prev - 1e-12) ++violations;
      }
      prev = r.log_prob;
      prev_finished = !r.truncated;
    }
  }
  MESSAGE("monotonicity violations: " << violations << " of " << comparable);
  CHECK(violations == 0);
}
