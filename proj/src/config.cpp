#include "trisim/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace trisim {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError("config error: " + path + ": " + msg);
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

void reject_unknown(const json& j, const std::string& path, const std::set<std::string>& known) {
  for (const auto& item : j.items())
    if (!known.count(item.key())) fail(path + "." + item.key(), "unknown key");
}

const json& require_key(const json& j, const std::string& path, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end()) fail(path + "." + key, "missing key");
  return *it;
}

int get_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

double get_num(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected a boolean");
  return j.get<bool>();
}

std::string get_str(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

std::vector<int> get_int_list(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of integers");
  std::vector<int> out;
  for (const auto& v : j) {
    if (!v.is_number_integer()) fail(path, "expected an array of integers");
    out.push_back(v.get<int>());
  }
  return out;
}

}  // namespace

RunConfig parse_config_json(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config error: invalid JSON: ") + e.what());
  }
  require_object(root, "$");
  reject_unknown(root, "$",
                 {"encoder", "blocks", "attention", "fusion", "head", "train"});
  RunConfig cfg;

  // encoder: all fields required
  const json& enc = require_key(root, "$", "encoder");
  require_object(enc, "encoder");
  reject_unknown(enc, "encoder", {"mode", "h", "l", "d", "vocab", "seed"});
  cfg.encoder.mode = get_str(require_key(enc, "encoder", "mode"), "encoder.mode");
  if (cfg.encoder.mode != "synth" && cfg.encoder.mode != "file")
    fail("encoder.mode", "must be \"synth\" or \"file\"");
  cfg.encoder.h = get_int(require_key(enc, "encoder", "h"), "encoder.h");
  cfg.encoder.l = get_int(require_key(enc, "encoder", "l"), "encoder.l");
  cfg.encoder.d = get_int(require_key(enc, "encoder", "d"), "encoder.d");
  cfg.encoder.vocab = get_int(require_key(enc, "encoder", "vocab"), "encoder.vocab");
  cfg.encoder.seed =
      static_cast<std::uint64_t>(get_num(require_key(enc, "encoder", "seed"), "encoder.seed"));
  if (cfg.encoder.h < 1) fail("encoder.h", "must be >= 1");
  if (cfg.encoder.l < 1) fail("encoder.l", "must be >= 1");
  if (cfg.encoder.d < 1) fail("encoder.d", "must be >= 1");
  if (cfg.encoder.mode == "synth" && cfg.encoder.vocab < 2)
    fail("encoder.vocab", "must be >= 2 for the synth encoder");

  if (auto it = root.find("blocks"); it != root.end()) {
    require_object(*it, "blocks");
    reject_unknown(*it, "blocks", {"strategy", "adaptive"});
    if (auto s = it->find("strategy"); s != it->end()) {
      if (s->is_array()) {
        cfg.blocks.strategy = "explicit";
        cfg.blocks.explicit_list = get_int_list(*s, "blocks.strategy");
      } else {
        cfg.blocks.strategy = get_str(*s, "blocks.strategy");
        static const std::set<std::string> strategies = {"all", "top_half", "bottom_half",
                                                         "spaced_half"};
        if (!strategies.count(cfg.blocks.strategy))
          fail("blocks.strategy",
               "must be all|top_half|bottom_half|spaced_half or an index list");
      }
    }
    if (auto a = it->find("adaptive"); a != it->end())
      cfg.blocks.adaptive = get_bool(*a, "blocks.adaptive");
  }

  if (auto it = root.find("attention"); it != root.end()) {
    require_object(*it, "attention");
    reject_unknown(*it, "attention", {"sa", "fa", "d_prime", "scale_scores", "fa_tied"});
    if (auto v = it->find("sa"); v != it->end()) cfg.attention.sa = get_bool(*v, "attention.sa");
    if (auto v = it->find("fa"); v != it->end()) {
      cfg.attention.fa = get_str(*v, "attention.fa");
      static const std::set<std::string> fas = {"none", "fa1", "fa2", "fa3"};
      if (!fas.count(cfg.attention.fa)) fail("attention.fa", "must be none|fa1|fa2|fa3");
    }
    if (auto v = it->find("d_prime"); v != it->end())
      cfg.attention.d_prime = get_int(*v, "attention.d_prime");
    if (auto v = it->find("scale_scores"); v != it->end())
      cfg.attention.scale_scores = get_bool(*v, "attention.scale_scores");
    if (auto v = it->find("fa_tied"); v != it->end())
      cfg.attention.fa_tied = get_bool(*v, "attention.fa_tied");
  }
  if (cfg.attention.d_prime == 0) cfg.attention.d_prime = std::max(1, cfg.encoder.d / 2);
  if (cfg.attention.d_prime < 1) fail("attention.d_prime", "must be >= 1");
  if (!cfg.attention.sa && cfg.attention.fa == "none")
    fail("attention", "at least one of sa/fa must be enabled");

  if (auto it = root.find("fusion"); it != root.end()) {
    require_object(*it, "fusion");
    reject_unknown(*it, "fusion",
                   {"mode", "k", "psi_sizes", "phi_size", "dilations", "d_dprime"});
    if (auto v = it->find("mode"); v != it->end()) {
      cfg.fusion.mode = get_str(*v, "fusion.mode");
      if (cfg.fusion.mode != "pooling" && cfg.fusion.mode != "rfm")
        fail("fusion.mode", "must be \"pooling\" or \"rfm\"");
    }
    if (auto v = it->find("k"); v != it->end()) cfg.fusion.k = get_int(*v, "fusion.k");
    if (auto v = it->find("psi_sizes"); v != it->end())
      cfg.fusion.psi_sizes = get_int_list(*v, "fusion.psi_sizes");
    if (auto v = it->find("phi_size"); v != it->end())
      cfg.fusion.phi_size = get_int(*v, "fusion.phi_size");
    if (auto v = it->find("dilations"); v != it->end())
      cfg.fusion.dilations = get_int_list(*v, "fusion.dilations");
    if (auto v = it->find("d_dprime"); v != it->end())
      cfg.fusion.d_dprime = get_int(*v, "fusion.d_dprime");
  }
  if (cfg.fusion.mode == "rfm") {
    if (cfg.fusion.k < 1) fail("fusion.k", "must be >= 1");
    if (static_cast<int>(cfg.fusion.psi_sizes.size()) != cfg.fusion.k)
      fail("fusion.psi_sizes", "must list exactly k kernel sizes");
    for (int s : cfg.fusion.psi_sizes)
      if (s < 1 || s % 2 == 0) fail("fusion.psi_sizes", "kernel sizes must be odd and >= 1");
    if (cfg.fusion.phi_size < 1 || cfg.fusion.phi_size % 2 == 0)
      fail("fusion.phi_size", "must be odd and >= 1");
    if (static_cast<int>(cfg.fusion.dilations.size()) != cfg.fusion.k)
      fail("fusion.dilations", "must list exactly k dilation rates");
    for (std::size_t i = 0; i < cfg.fusion.dilations.size(); ++i) {
      if (cfg.fusion.dilations[i] < 1) fail("fusion.dilations", "rates must be >= 1");
      if (i > 0 && cfg.fusion.dilations[i] < cfg.fusion.dilations[i - 1])
        fail("fusion.dilations", "rates must be non-decreasing");
    }
    if (cfg.fusion.d_dprime < 1) fail("fusion.d_dprime", "must be >= 1");
  }

  if (auto it = root.find("head"); it != root.end()) {
    require_object(*it, "head");
    reject_unknown(*it, "head", {"hidden", "labels"});
    if (auto v = it->find("hidden"); v != it->end())
      cfg.head.hidden = get_int(*v, "head.hidden");
    if (auto v = it->find("labels"); v != it->end()) {
      cfg.head.labels = get_str(*v, "head.labels");
      if (cfg.head.labels != "binary" && cfg.head.labels != "ternary")
        fail("head.labels", "must be \"binary\" or \"ternary\"");
    }
  }
  if (cfg.head.hidden < 1) fail("head.hidden", "must be >= 1");

  if (auto it = root.find("train"); it != root.end()) {
    require_object(*it, "train");
    reject_unknown(*it, "train",
                   {"epochs", "batch_size", "lr", "beta1", "beta2", "eps", "patience", "decay",
                    "seed", "clip_norm"});
    if (auto v = it->find("epochs"); v != it->end())
      cfg.train.epochs = get_int(*v, "train.epochs");
    if (auto v = it->find("batch_size"); v != it->end())
      cfg.train.batch_size = get_int(*v, "train.batch_size");
    if (auto v = it->find("lr"); v != it->end()) cfg.train.lr = get_num(*v, "train.lr");
    if (auto v = it->find("beta1"); v != it->end()) cfg.train.beta1 = get_num(*v, "train.beta1");
    if (auto v = it->find("beta2"); v != it->end()) cfg.train.beta2 = get_num(*v, "train.beta2");
    if (auto v = it->find("eps"); v != it->end()) cfg.train.eps = get_num(*v, "train.eps");
    if (auto v = it->find("patience"); v != it->end())
      cfg.train.patience = get_int(*v, "train.patience");
    if (auto v = it->find("decay"); v != it->end()) cfg.train.decay = get_num(*v, "train.decay");
    if (auto v = it->find("seed"); v != it->end())
      cfg.train.seed = static_cast<std::uint64_t>(get_num(*v, "train.seed"));
    if (auto v = it->find("clip_norm"); v != it->end())
      cfg.train.clip_norm = get_num(*v, "train.clip_norm");
  }
  if (cfg.train.epochs < 1) fail("train.epochs", "must be >= 1");
  if (cfg.train.batch_size < 1) fail("train.batch_size", "must be >= 1");
  if (cfg.train.lr <= 0) fail("train.lr", "must be > 0");
  if (cfg.train.beta1 < 0 || cfg.train.beta1 >= 1) fail("train.beta1", "must be in [0, 1)");
  if (cfg.train.beta2 < 0 || cfg.train.beta2 >= 1) fail("train.beta2", "must be in [0, 1)");
  if (cfg.train.eps <= 0) fail("train.eps", "must be > 0");
  if (cfg.train.patience < 1) fail("train.patience", "must be >= 1");
  if (cfg.train.decay <= 0 || cfg.train.decay >= 1) fail("train.decay", "must be in (0, 1)");
  if (cfg.train.clip_norm < 0) fail("train.clip_norm", "must be >= 0");

  // Validate the block selection against H.
  try {
    cfg.block_selection().indices(cfg.encoder.h);
  } catch (const ArgumentError& e) {
    fail("blocks.strategy", e.what());
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config error: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_json(ss.str());
}

std::string config_to_json(const RunConfig& cfg) {
  json j;
  j["encoder"] = {{"mode", cfg.encoder.mode}, {"h", cfg.encoder.h},     {"l", cfg.encoder.l},
                  {"d", cfg.encoder.d},       {"vocab", cfg.encoder.vocab},
                  {"seed", cfg.encoder.seed}};
  if (cfg.blocks.strategy == "explicit")
    j["blocks"]["strategy"] = cfg.blocks.explicit_list;
  else
    j["blocks"]["strategy"] = cfg.blocks.strategy;
  j["blocks"]["adaptive"] = cfg.blocks.adaptive;
  j["attention"] = {{"sa", cfg.attention.sa},
                    {"fa", cfg.attention.fa},
                    {"d_prime", cfg.attention.d_prime},
                    {"scale_scores", cfg.attention.scale_scores},
                    {"fa_tied", cfg.attention.fa_tied}};
  j["fusion"] = {{"mode", cfg.fusion.mode},       {"k", cfg.fusion.k},
                 {"psi_sizes", cfg.fusion.psi_sizes}, {"phi_size", cfg.fusion.phi_size},
                 {"dilations", cfg.fusion.dilations}, {"d_dprime", cfg.fusion.d_dprime}};
  j["head"] = {{"hidden", cfg.head.hidden}, {"labels", cfg.head.labels}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"lr", cfg.train.lr},
                {"beta1", cfg.train.beta1},
                {"beta2", cfg.train.beta2},
                {"eps", cfg.train.eps},
                {"patience", cfg.train.patience},
                {"decay", cfg.train.decay},
                {"seed", cfg.train.seed},
                {"clip_norm", cfg.train.clip_norm}};
  return j.dump(2);
}

bool same_architecture(const RunConfig& a, const RunConfig& b) {
  const json ja = json::parse(config_to_json(a));
  const json jb = json::parse(config_to_json(b));
  for (const char* section : {"encoder", "blocks", "attention", "fusion", "head"})
    if (ja[section] != jb[section]) return false;
  return true;
}

}  // namespace trisim
