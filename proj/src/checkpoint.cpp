#include "semparse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "semparse/error.hpp"

namespace semparse {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "SEMPCKPT";

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

std::uint64_t get_u64_le(std::string_view s) {
  std::uint64_t v = 0;
  for (int k = 7; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(s[k]);
  return v;
}

void put_f64_le(std::string& out, double d) {
  put_u64_le(out, std::bit_cast<std::uint64_t>(d));
}

std::uint32_t crc_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

json lexicon_json(const ArgumentLexicon& lex) {
  json out = json::array();
  for (const LexiconEntry& e : lex.entries()) {
    out.push_back(json{e.surface, e.type_name, e.constant});
  }
  return out;
}

ArgumentLexicon lexicon_from_json(const json& j) {
  ArgumentLexicon lex;
  for (const json& e : j) {
    std::string surface;
    for (const std::string& tok : e.at(0).get<Tokens>()) {
      if (!surface.empty()) surface += ' ';
      surface += tok;
    }
    lex.add(surface, e.at(1).get<std::string>(), e.at(2).get<std::string>());
  }
  return lex;
}

}  // namespace

std::string serialize_checkpoint(const Parser& parser, const json& config,
                                 std::uint64_t seed) {
  const ModelParameters& model = parser.model();
  const ModelConfig& mc = model.config();
  const PipelineOptions& po = parser.pipeline().options();
  const TreeDecodeOptions& dec = parser.decode_options();

  std::string payload;
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const nn::Parameter* p : model.parameters()) {
    std::string bytes;
    bytes.reserve(static_cast<std::size_t>(p->size()) * 8);
    for (Eigen::Index k = 0; k < p->size(); ++k) put_f64_le(bytes, p->value.data()[k]);
    tensors.push_back(json{{"name", p->name},
                           {"shape", {p->rows(), p->cols()}},
                           {"offset", offset},
                           {"crc32", crc_of(bytes)}});
    offset += static_cast<std::uint64_t>(p->size());
    payload += bytes;
  }

  json header{
      {"format", "semparse-checkpoint"},
      {"version", kCheckpointVersion},
      {"model",
       {{"decoder", std::string(to_string(mc.decoder))},
        {"attention", mc.attention},
        {"embed_dim", mc.embed_dim},
        {"hidden_dim", mc.hidden_dim},
        {"num_layers", mc.num_layers},
        {"input_vocab_size", mc.input_vocab_size},
        {"output_vocab_size", mc.output_vocab_size}}},
      {"pipeline",
       {{"argument_identification", po.argument_identification},
        {"stem", po.stem},
        {"reverse_input", po.reverse_input},
        {"lf_format", std::string(to_string(po.lf_format))},
        {"marker_types", parser.pipeline().marker_types()},
        {"lexicon", lexicon_json(parser.pipeline().lexicon())}}},
      {"decode",
       {{"max_seq_len", dec.max_seq_len},
        {"max_depth", dec.max_depth},
        {"max_nodes", dec.max_nodes}}},
      {"input_vocab",
       {{"tokens", parser.input_vocab().tokens()},
        {"min_count", parser.input_vocab().min_count()}}},
      {"output_vocab",
       {{"tokens", parser.output_vocab().tokens()},
        {"min_count", parser.output_vocab().min_count()}}},
      {"config", config},
      {"seed", seed},
      {"tensors", tensors},
      {"payload_values", offset},
  };
  const std::string text = header.dump();

  std::string out(kMagic);
  put_u64_le(out, text.size());
  out += text;
  out += payload;
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw DataError("not a checkpoint (bad magic)");
  }
  const std::uint64_t header_len = get_u64_le(bytes.substr(kMagic.size(), 8));
  const std::size_t header_start = kMagic.size() + 8;
  if (header_len > bytes.size() - header_start) throw DataError("checkpoint header truncated");
  json h;
  try {
    h = json::parse(bytes.substr(header_start, header_len));
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const std::string_view payload = bytes.substr(header_start + header_len);

  try {
    if (h.at("format") != "semparse-checkpoint") throw DataError("unknown checkpoint format");
    if (h.at("version").get<int>() != kCheckpointVersion) {
      throw DataError("unsupported checkpoint version " + h.at("version").dump());
    }
    const json& m = h.at("model");
    ModelConfig mc;
    mc.decoder = decoder_kind_from_string(m.at("decoder").get<std::string>());
    mc.attention = m.at("attention").get<bool>();
    mc.embed_dim = m.at("embed_dim").get<int>();
    mc.hidden_dim = m.at("hidden_dim").get<int>();
    mc.num_layers = m.at("num_layers").get<int>();
    mc.input_vocab_size = m.at("input_vocab_size").get<int>();
    mc.output_vocab_size = m.at("output_vocab_size").get<int>();

    const json& p = h.at("pipeline");
    PipelineOptions po;
    po.argument_identification = p.at("argument_identification").get<bool>();
    po.stem = p.at("stem").get<bool>();
    po.reverse_input = p.at("reverse_input").get<bool>();
    po.lf_format = lf_format_from_string(p.at("lf_format").get<std::string>());
    Pipeline pipeline(po, lexicon_from_json(p.at("lexicon")));

    const json& d = h.at("decode");
    TreeDecodeOptions dec{d.at("max_seq_len").get<int>(), d.at("max_depth").get<int>(),
                          d.at("max_nodes").get<int>(), true};

    Vocabulary in_vocab = Vocabulary::from_tokens(
        h.at("input_vocab").at("tokens").get<std::vector<std::string>>(),
        h.at("input_vocab").at("min_count").get<int>());
    Vocabulary out_vocab = Vocabulary::from_tokens(
        h.at("output_vocab").at("tokens").get<std::vector<std::string>>(),
        h.at("output_vocab").at("min_count").get<int>());

    ModelParameters model(mc);
    const json& tensors = h.at("tensors");
    nn::ParameterList params = model.parameters();
    if (tensors.size() != params.size()) throw DataError("checkpoint tensor count mismatch");
    if (payload.size() != h.at("payload_values").get<std::uint64_t>() * 8) {
      throw DataError("checkpoint payload size mismatch");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      nn::Parameter& param = *params[k];
      const json& t = tensors[k];
      if (t.at("name").get<std::string>() != param.name ||
          t.at("shape").at(0).get<Eigen::Index>() != param.rows() ||
          t.at("shape").at(1).get<Eigen::Index>() != param.cols()) {
        throw DataError("checkpoint tensor " + std::to_string(k) + " does not match the model");
      }
      const std::uint64_t off = t.at("offset").get<std::uint64_t>() * 8;
      const std::uint64_t len = static_cast<std::uint64_t>(param.size()) * 8;
      if (off + len > payload.size()) throw DataError("checkpoint tensor out of range");
      const std::string_view raw = payload.substr(off, len);
      if (crc_of(raw) != t.at("crc32").get<std::uint32_t>()) {
        throw DataError("checksum mismatch in tensor " + param.name);
      }
      for (Eigen::Index i = 0; i < param.size(); ++i) {
        param.value.data()[i] = std::bit_cast<double>(get_u64_le(raw.substr(i * 8, 8)));
      }
    }
    Checkpoint out{Parser(std::move(pipeline), std::move(in_vocab), std::move(out_vocab),
                          std::move(model), dec),
                   h.at("config"), h.at("seed").get<std::uint64_t>()};
    return out;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const Error& e) {
    if (dynamic_cast<const DataError*>(&e) != nullptr) throw;
    throw DataError(std::string("inconsistent checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Parser& parser, const json& config,
                     std::uint64_t seed) {
  const std::string bytes = serialize_checkpoint(parser, config, seed);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace semparse
