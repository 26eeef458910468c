#include "fastclip/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fastclip::io {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

const std::vector<RunConfig::KeyInfo>& RunConfig::registry() {
  static const std::vector<KeyInfo> keys = {
      {"data.dataset", "", "path of the binary pair dataset (required by train)"},
      {"data.probe_size", "256", "held-out pairs at the end of the dataset used for metrics"},
      {"model.embed_dim", "16", "shared embedding dimension d"},
      {"model.hidden_dim", "0", "0 = linear towers, >0 = tanh MLP hidden width"},
      {"fabric.workers", "1", "simulated data-parallel worker count K"},
      {"fabric.reduction", "auto", "gradient reduction strategy: auto|fastclip|openclip_rs"},
      {"algo.variant", "fastclip_v3",
       "openclip_mbcl|sogclr|isogclr|fastclip_v0|fastclip_v1|fastclip_v2|fastclip_v3"},
      {"algo.epochs", "10", "total training epochs"},
      {"algo.batch_per_worker", "32", "local batch size per worker"},
      {"algo.seed", "0", "global seed for sampling and init"},
      {"loss.epsilon", "1e-14", "constant inside log(epsilon + u)"},
      {"loss.epsilon_late", "auto", "epsilon after the switch epoch (auto = no change)"},
      {"loss.epsilon_switch_epoch", "auto", "first epoch using epsilon_late (auto = never)"},
      {"loss.scale_by_tau", "auto", "multiply model gradients by tau: auto|on|off"},
      {"gamma.kind", "auto", "inner LR schedule: auto|constant|cosine"},
      {"gamma.value", "0.6", "constant-schedule gamma in (0,1]"},
      {"gamma.min", "0.2", "cosine-schedule floor"},
      {"gamma.decay_epochs", "auto", "cosine decay epochs E (auto = half of algo.epochs)"},
      {"temperature.init", "auto", "initial tau (auto: 0.07 for fastclip_v3, else 0.03)"},
      {"temperature.tau0", "0.005", "projection floor for learnable tau"},
      {"temperature.lr", "auto",
       "tau learning rate (auto: 1e-2 individual schemes, 2e-4 global learnable)"},
      {"temperature.rho", "auto",
       "margin hyperparameter (auto: 9.0 individual schemes, 6.5 fastclip_v3, else 0)"},
      {"temperature.lr_decay", "auto",
       "one-way tau-lr decay once tau dips under the threshold: auto|on|off"},
      {"temperature.lr_decay_threshold", "0.03", "tau threshold for the decay latch"},
      {"temperature.lr_decay_factor", "0.3333333333333333", "tau-lr multiplier once latched"},
      {"optimizer.kind", "adamw", "model-parameter optimizer: adamw|lamb"},
      {"optimizer.lr", "1e-3", "peak model learning rate"},
      {"optimizer.min_lr", "0", "final learning rate of the cosine decay"},
      {"optimizer.warmup_iters", "auto", "linear warmup iterations (auto = total/10)"},
      {"optimizer.beta1", "0.9", "Adam beta1"},
      {"optimizer.beta2", "0.999", "Adam beta2"},
      {"optimizer.eps", "1e-8", "Adam epsilon"},
      {"optimizer.weight_decay", "0.1", "decoupled weight decay for model parameters"},
      {"run.out_dir", "out", "output directory for metrics/checkpoints/ledger"},
      {"run.checkpoint_every", "0", "checkpoint every N epochs (0 = final only)"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const KeyInfo& k : registry()) values_[k.key] = k.def;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "unknown configuration key");
  it->second = trim(value);
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "unknown configuration key");
  return it->second;
}

bool RunConfig::is_auto(const std::string& key) const { return get(key) == "auto"; }

long long RunConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected an integer, got '" + v + "'");
  }
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got '" + v + "'");
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "expected on/off, got '" + v + "'");
}

RunConfig RunConfig::parse(std::istream& is) {
  RunConfig cfg;
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno), "malformed section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno), "expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    cfg.set(full, value);
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open '" + path + "'");
  return parse(is);
}

void RunConfig::apply_env_overrides() {
  for (const KeyInfo& k : registry()) {
    std::string env = "FASTCLIP_";
    for (const char* p = k.key; *p; ++p) {
      env += *p == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(*p)));
    }
    if (const char* v = std::getenv(env.c_str())) set(k.key, v);
  }
}

void RunConfig::write(std::ostream& os) const {
  std::string section;
  for (const KeyInfo& k : registry()) {
    const std::string key = k.key;
    const std::string sec = key.substr(0, key.find('.'));
    if (sec != section) {
      if (!section.empty()) os << '\n';
      os << '[' << sec << "]\n";
      section = sec;
    }
    os << key.substr(key.find('.') + 1) << " = " << values_.at(key) << '\n';
  }
}

}  // namespace fastclip::io
