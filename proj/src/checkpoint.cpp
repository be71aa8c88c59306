#include "stylex/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <sstream>

namespace stylex {

namespace {
using nlohmann::json;
using nlohmann::ordered_json;

constexpr char kMagic[8] = {'S', 'L', 'X', 'T', 'A', '0', '0', '1'};

json task_to_json(const StyleTask& t) {
  return json{{"name", t.name},
              {"d_l_word", t.d_l_word},
              {"sentence_labels", {t.sentence_labels.first, t.sentence_labels.second}},
              {"positive_word_classes", t.positive_word_classes}};
}

StyleTask task_from_json(const json& j) {
  StyleTask t;
  t.name = j.at("name").get<std::string>();
  t.d_l_word = j.at("d_l_word").get<int>();
  auto labels = j.at("sentence_labels");
  t.sentence_labels = {labels.at(0).get<std::string>(), labels.at(1).get<std::string>()};
  t.positive_word_classes = j.at("positive_word_classes").get<std::vector<int>>();
  t.validate();
  return t;
}

json encoder_config_to_json(const EncoderConfig& c) {
  return json{{"hidden_size", c.hidden_size},    {"num_layers", c.num_layers},
              {"num_heads", c.num_heads},        {"vocab_size", c.vocab_size},
              {"max_seq_len", c.max_seq_len},    {"dropout", c.dropout}};
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  c.hidden_size = j.at("hidden_size").get<int>();
  c.num_layers = j.at("num_layers").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

}  // namespace

void save_checkpoint(StylexModel& model, const std::string& path) {
  if (!model.initialized()) throw StateError("save_checkpoint: model is uninitialized");
  ParamRegistry reg;
  model.register_params(reg);

  ordered_json header;
  header["format_version"] = 1;
  header["task"] = task_to_json(model.task());
  header["encoder"] = encoder_config_to_json(model.encoder_config());
  header["alpha"] = model.alpha();
  header["trained"] = model.trained();
  header["vocab"] = model.vocab().tokens();
  ordered_json tensors = ordered_json::array();
  for (auto& [name, t] : reg) {
    tensors.push_back(ordered_json{{"name", name}, {"shape", t->shape()}});
  }
  header["tensors"] = tensors;
  std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  std::uint64_t hlen = header_str.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (auto& [name, t] : reg) {
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->numel() * sizeof(double)));
  }
  if (!out) throw IoError("checkpoint write failed: " + path);
}

StylexModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("not a stylex checkpoint: " + path);
  }
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header_str(hlen, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw ParseError("truncated checkpoint header: " + path);
  json header = json::parse(header_str);
  if (header.at("format_version").get<int>() != 1) {
    throw ParseError("unsupported checkpoint version");
  }

  StyleTask task = task_from_json(header.at("task"));
  EncoderConfig cfg = encoder_config_from_json(header.at("encoder"));
  Vocabulary vocab = Vocabulary::from_tokens(header.at("vocab").get<std::vector<std::string>>());
  StylexModel model(task, cfg, vocab, /*init_seed=*/0, header.at("alpha").get<double>());

  ParamRegistry reg;
  model.register_params(reg);
  const auto& tensors = header.at("tensors");
  if (tensors.size() != reg.size()) throw ParseError("checkpoint tensor manifest mismatch");
  for (std::size_t i = 0; i < reg.size(); ++i) {
    const auto& entry = tensors.at(i);
    if (entry.at("name").get<std::string>() != reg[i].first) {
      throw ParseError("checkpoint tensor order mismatch at " + reg[i].first);
    }
    std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    if (shape != reg[i].second->shape()) {
      throw ParseError("checkpoint tensor shape mismatch at " + reg[i].first);
    }
    in.read(reinterpret_cast<char*>(reg[i].second->data()),
            static_cast<std::streamsize>(reg[i].second->numel() * sizeof(double)));
    if (!in) throw ParseError("truncated checkpoint data at " + reg[i].first);
  }
  if (header.at("trained").get<bool>()) model.mark_trained();
  return model;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash file: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h = (h ^ static_cast<unsigned char>(buf[i])) * 0x100000001b3ULL;
    }
    if (!in) break;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

}  // namespace stylex
