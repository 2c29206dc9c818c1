#include "ergl/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ergl {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& v, const std::string& where) {
  std::vector<int> out;
  std::istringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ConfigError(where + ": expected integer list, got '" + v + "'");
    }
  }
  return out;
}

std::vector<std::string> parse_str_list(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(where + ": expected boolean, got '" + v + "'");
}

template <typename T>
T parse_num(const std::string& v, const std::string& where) {
  try {
    if constexpr (std::is_same_v<T, double>)
      return std::stod(v);
    else if constexpr (std::is_same_v<T, uint64_t>)
      return static_cast<uint64_t>(std::stoull(v));
    else
      return static_cast<T>(std::stoll(v));
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected number, got '" + v + "'");
  }
}

}  // namespace

TrainConfig parse_config_text(const std::string& text, const std::string& origin) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string where = origin + ":" + std::to_string(lineno);
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "train" && section != "model")
        throw ConfigError(where + ": unknown section '" + section + "'");
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + ": expected key = value, got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside any section");

    if (section == "train") {
      if (key == "lambda1")
        cfg.lambda1 = parse_num<double>(value, where);
      else if (key == "lambda2")
        cfg.lambda2 = parse_num<double>(value, where);
      else if (key == "lr")
        cfg.lr = parse_num<double>(value, where);
      else if (key == "batch_size")
        cfg.batch_size = parse_num<int>(value, where);
      else if (key == "epochs")
        cfg.epochs = parse_num<int>(value, where);
      else if (key == "seed")
        cfg.seed = parse_num<uint64_t>(value, where);
      else if (key == "weight_decay")
        cfg.weight_decay = parse_num<double>(value, where);
      else if (key == "beta1")
        cfg.beta1 = parse_num<double>(value, where);
      else if (key == "beta2")
        cfg.beta2 = parse_num<double>(value, where);
      else if (key == "adam_eps")
        cfg.adam_eps = parse_num<double>(value, where);
      else if (key == "precision")
        cfg.precision = value;
      else if (key == "freeze")
        cfg.freeze = parse_str_list(value);
      else
        throw ConfigError(where + ": unknown [train] key '" + key + "'");
    } else {
      if (key == "n")
        cfg.model.n_events = parse_num<int>(value, where);
      else if (key == "gcn_layers" || key == "U")
        cfg.model.gcn_layers = parse_num<int>(value, where);
      else if (key == "conv_channels")
        cfg.model.conv_channels = parse_int_list(value, where);
      else if (key == "scene_classes")
        cfg.model.scene_classes = parse_num<int>(value, where);
      else if (key == "use_ncm")
        cfg.model.use_ncm = parse_bool(value, where);
      else if (key == "use_nnm")
        cfg.model.use_nnm = parse_bool(value, where);
      else if (key == "bn_momentum")
        cfg.model.bn_momentum = parse_num<double>(value, where);
      else if (key == "bn_eps")
        cfg.model.bn_eps = parse_num<double>(value, where);
      else
        throw ConfigError(where + ": unknown [model] key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

std::string train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["train"] = {{"lambda1", cfg.lambda1},
                {"lambda2", cfg.lambda2},
                {"lr", cfg.lr},
                {"batch_size", cfg.batch_size},
                {"epochs", cfg.epochs},
                {"seed", cfg.seed},
                {"weight_decay", cfg.weight_decay},
                {"beta1", cfg.beta1},
                {"beta2", cfg.beta2},
                {"adam_eps", cfg.adam_eps},
                {"precision", cfg.precision},
                {"freeze", cfg.freeze}};
  j["model"] = {{"n", cfg.model.n_events},
                {"gcn_layers", cfg.model.gcn_layers},
                {"node_dim", cfg.model.node_dim},
                {"joint_dim", cfg.model.joint_dim},
                {"conv_channels", cfg.model.conv_channels},
                {"mel_bins", cfg.model.mel_bins},
                {"scene_classes", cfg.model.scene_classes},
                {"use_ncm", cfg.model.use_ncm},
                {"use_nnm", cfg.model.use_nnm},
                {"bn_momentum", cfg.model.bn_momentum},
                {"bn_eps", cfg.model.bn_eps}};
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config json: ") + e.what());
  }
  TrainConfig cfg;
  try {
    const auto& t = j.at("train");
    cfg.lambda1 = t.at("lambda1").get<double>();
    cfg.lambda2 = t.at("lambda2").get<double>();
    cfg.lr = t.at("lr").get<double>();
    cfg.batch_size = t.at("batch_size").get<int>();
    cfg.epochs = t.at("epochs").get<int>();
    cfg.seed = t.at("seed").get<uint64_t>();
    cfg.weight_decay = t.at("weight_decay").get<double>();
    cfg.beta1 = t.at("beta1").get<double>();
    cfg.beta2 = t.at("beta2").get<double>();
    cfg.adam_eps = t.at("adam_eps").get<double>();
    cfg.precision = t.at("precision").get<std::string>();
    cfg.freeze = t.at("freeze").get<std::vector<std::string>>();
    const auto& m = j.at("model");
    cfg.model.n_events = m.at("n").get<int>();
    cfg.model.gcn_layers = m.at("gcn_layers").get<int>();
    cfg.model.node_dim = m.at("node_dim").get<int>();
    cfg.model.joint_dim = m.at("joint_dim").get<int>();
    cfg.model.conv_channels = m.at("conv_channels").get<std::vector<int>>();
    cfg.model.mel_bins = m.at("mel_bins").get<int>();
    cfg.model.scene_classes = m.at("scene_classes").get<int>();
    cfg.model.use_ncm = m.at("use_ncm").get<bool>();
    cfg.model.use_nnm = m.at("use_nnm").get<bool>();
    cfg.model.bn_momentum = m.at("bn_momentum").get<double>();
    cfg.model.bn_eps = m.at("bn_eps").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config json: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace ergl
