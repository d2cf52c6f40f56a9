#include "nmt/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace nmt {

namespace {

using nlohmann::json;

const char* kMagic = "NMTCKPT 1";

json config_to_json(const ModelConfig& c) {
  return json{{"layers", c.layers},
              {"model_dim", c.model_dim},
              {"ffn_dim", c.ffn_dim},
              {"heads", c.heads},
              {"dropout", c.dropout},
              {"attention_dropout", c.attention_dropout},
              {"activation_dropout", c.activation_dropout},
              {"max_positions", c.max_positions},
              {"tie_target_embeddings", c.tie_target_embeddings}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<int>();
  c.model_dim = j.at("model_dim").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.heads = j.at("heads").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.attention_dropout = j.at("attention_dropout").get<double>();
  c.activation_dropout = j.at("activation_dropout").get<double>();
  c.max_positions = j.at("max_positions").get<int>();
  c.tie_target_embeddings = j.at("tie_target_embeddings").get<bool>();
  return c;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

uint64_t parse_hex64(const std::string& s) { return std::stoull(s, nullptr, 16); }

}  // namespace

void save_checkpoint(const Model<float>& model, const std::string& path) {
  json dir = json::array();
  uint64_t offset = 0;
  for (const auto& name : model.params.names) {
    const auto& t = model.params.at(name);
    json shape = json::array();
    for (long d : t.shape()) shape.push_back(d);
    dir.push_back({{"name", name}, {"shape", shape}, {"offset", offset}});
    offset += static_cast<uint64_t>(t.size()) * sizeof(float);
  }
  json header{{"format_version", 1},
              {"config", config_to_json(model.cfg)},
              {"src_vocab_size", model.src_vocab_size},
              {"tgt_vocab_size", model.tgt_vocab_size},
              {"src_vocab_fp", hex64(model.src_vocab_fp)},
              {"tgt_vocab_fp", hex64(model.tgt_vocab_fp)},
              {"params", dir}};
  std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << kMagic << '\n' << htext.size() << '\n' << htext << '\n';
  for (const auto& name : model.params.names) {
    const auto& data = model.params.at(name).data();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write on checkpoint: " + path);
}

Model<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint: " + path);
  std::string magic;
  std::getline(in, magic);
  if (magic != kMagic) throw IoError("not a checkpoint file (bad magic): " + path);
  std::string size_line;
  std::getline(in, size_line);
  size_t hsize = std::stoul(size_line);
  std::string htext(hsize, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hsize));
  char nl = 0;
  in.get(nl);
  if (!in || nl != '\n') throw IoError("corrupt checkpoint header: " + path);

  json header = json::parse(htext);
  if (header.at("format_version").get<int>() != 1)
    throw IoError("unsupported checkpoint format version in " + path);

  Model<float> m;
  m.cfg = config_from_json(header.at("config"));
  m.src_vocab_size = header.at("src_vocab_size").get<long>();
  m.tgt_vocab_size = header.at("tgt_vocab_size").get<long>();
  m.src_vocab_fp = parse_hex64(header.at("src_vocab_fp").get<std::string>());
  m.tgt_vocab_fp = parse_hex64(header.at("tgt_vocab_fp").get<std::string>());

  for (const auto& entry : header.at("params")) {
    std::string name = entry.at("name").get<std::string>();
    Shape shape;
    for (const auto& d : entry.at("shape")) shape.push_back(d.get<long>());
    auto t = Tensor<float>::zeros(shape, true);
    in.read(reinterpret_cast<char*>(t.data().data()),
            static_cast<std::streamsize>(t.data().size() * sizeof(float)));
    if (!in) throw IoError("truncated parameter block '" + name + "' in " + path);
    m.params.add(name, std::move(t));
  }
  return m;
}

}  // namespace nmt
