// SPDX-License-Identifier: Apache-2.0
#include "unlearn/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace unlearn {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("config: invalid value '" + std::string(value) + "' for " + std::string(key) + " (expected " +
                    std::string(expected) + ")");
}

template <typename T>
T parse_number(std::string_view key, std::string_view v, std::string_view expected) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, expected);
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ec == std::errc() ? ptr : buf);
}

struct Entry {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

#define UL_INT(KEY, FIELD)                                                                    \
  Entry {                                                                                     \
    KEY, [](const RunConfig& c) { return std::to_string(c.FIELD); },                          \
        [](RunConfig& c, std::string_view v) {                                                \
          c.FIELD = parse_number<decltype(c.FIELD)>(KEY, v, "a non-negative integer");        \
        }                                                                                     \
  }
#define UL_REAL(KEY, FIELD)                                                                           \
  Entry {                                                                                             \
    KEY, [](const RunConfig& c) { return format_double(c.FIELD); },                                   \
        [](RunConfig& c, std::string_view v) { c.FIELD = parse_number<double>(KEY, v, "a real number"); } \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      UL_INT("sched.T", sched.T),
      UL_REAL("sched.beta_lo", sched.beta_lo),
      UL_REAL("sched.beta_hi", sched.beta_hi),
      UL_INT("sched.t_min", sched.t_min),
      UL_INT("sched.t_max", sched.t_max),
      UL_INT("sched.t_init", sched.t_init),
      UL_REAL("sched.sigma_init", sched.sigma_init),
      Entry{"net.hidden",
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.net.hidden.size(); ++i) s += (i ? "," : "") + std::to_string(c.net.hidden[i]);
              return s.empty() ? std::string("none") : s;
            },
            [](RunConfig& c, std::string_view v) {
              c.net.hidden.clear();
              if (v == "none") return;
              std::size_t start = 0;
              while (start <= v.size()) {
                const auto end = std::min(v.find(',', start), v.size());
                c.net.hidden.push_back(parse_number<std::size_t>("net.hidden", trim(v.substr(start, end - start)),
                                                                 "comma-separated widths or 'none'"));
                start = end + 1;
              }
            }},
      UL_INT("net.class_embed", net.class_embed),
      UL_INT("net.time_embed", net.time_embed),
      UL_INT("net.init_seed", net.init_seed),
      UL_INT("data.K", data.K),
      Entry{"data.layout", [](const RunConfig& c) { return std::string(layout_name(c.data.layout)); },
            [](RunConfig& c, std::string_view v) {
              if (v != "ring" && v != "grid") bad_value("data.layout", v, "ring or grid");
              c.data.layout = parse_layout(v);
            }},
      UL_REAL("data.spread", data.spread),
      UL_REAL("data.cov_scale", data.cov_scale),
      UL_INT("data.per_class", data.per_class),
      UL_INT("data.seed", data.seed),
      UL_INT("classes.forget", classes.forget),
      UL_INT("classes.cover", classes.cover),
      UL_REAL("loss.lambda_psi", loss.lambda_psi),
      UL_REAL("loss.mu_psi", loss.mu_psi),
      UL_REAL("loss.lambda_theta", loss.lambda_theta),
      UL_REAL("loss.mu_theta", loss.mu_theta),
      UL_REAL("loss.xi", loss.xi),
      Entry{"loss.retain_weight",
            [](const RunConfig& c) {
              return std::string(c.weights.retain_weight == RetainWeight::Uniform ? "uniform" : "omega");
            },
            [](RunConfig& c, std::string_view v) {
              if (v == "uniform") c.weights.retain_weight = RetainWeight::Uniform;
              else if (v == "omega") c.weights.retain_weight = RetainWeight::Omega;
              else bad_value("loss.retain_weight", v, "uniform or omega");
            }},
      UL_REAL("loss.omega_floor", weights.floor),
      UL_REAL("opt.lr_psi", opt.lr_psi),
      UL_REAL("opt.lr_theta", opt.lr_theta),
      UL_REAL("opt.beta1", opt.beta1),
      UL_REAL("opt.beta2", opt.beta2),
      UL_REAL("opt.eps", opt.eps),
      Entry{"mask.policy",
            [](const RunConfig& c) {
              return std::string(c.mask.policy.kind == MaskPolicyKind::Quantile ? "quantile" : "absolute");
            },
            [](RunConfig& c, std::string_view v) {
              if (v == "quantile") c.mask.policy.kind = MaskPolicyKind::Quantile;
              else if (v == "absolute") c.mask.policy.kind = MaskPolicyKind::Absolute;
              else bad_value("mask.policy", v, "quantile or absolute");
            }},
      UL_REAL("mask.q", mask.policy.q),
      UL_REAL("mask.gamma", mask.policy.gamma),
      UL_INT("mask.refresh", mask.refresh),
      UL_INT("mask.batch", mask.batch),
      Entry{"train.method", [](const RunConfig& c) { return std::string(method_name(c.train.method)); },
            [](RunConfig& c, std::string_view v) {
              if (v != "pecker" && v != "sfd" && v != "retrain") bad_value("train.method", v, "pecker, sfd or retrain");
              c.train.method = parse_method(v);
            }},
      Entry{"train.order",
            [](const RunConfig& c) {
              return std::string(c.train.order == UpdateOrder::RetainFirst ? "retain_first" : "forget_first");
            },
            [](RunConfig& c, std::string_view v) {
              if (v == "retain_first") c.train.order = UpdateOrder::RetainFirst;
              else if (v == "forget_first") c.train.order = UpdateOrder::ForgetFirst;
              else bad_value("train.order", v, "retain_first or forget_first");
            }},
      UL_INT("train.batch_retain", train.batch_retain),
      UL_INT("train.batch_forget", train.batch_forget),
      UL_INT("train.steps", train.steps),
      UL_INT("train.images", train.images),
      UL_INT("train.seed", train.seed),
      UL_INT("train.eval_interval", train.eval_interval),
      UL_INT("train.checkpoint_interval", train.checkpoint_interval),
      UL_INT("pretrain.steps", pretrain.steps),
      UL_INT("pretrain.batch", pretrain.batch),
      UL_REAL("pretrain.lr", pretrain.lr),
      UL_INT("pretrain.seed", pretrain.seed),
      UL_INT("eval.n", eval.n),
      UL_INT("eval.precision_n", eval.precision_n),
      UL_INT("eval.k", eval.k),
      UL_INT("eval.seed", eval.seed),
  };
  return table;
}

#undef UL_INT
#undef UL_REAL

const Entry& find_entry(std::string_view key) {
  for (const Entry& e : entries()) {
    if (e.key == key) return e;
  }
  throw ConfigError("config: unknown key '" + std::string(key) + "'");
}

}  // namespace

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  find_entry(key).set(config, trim(value));
}

std::string get_config_value(const RunConfig& config, std::string_view key) { return find_entry(key).get(config); }

bool has_config_key(std::string_view key) {
  for (const Entry& e : entries()) {
    if (e.key == key) return true;
  }
  return false;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Entry& e : entries()) keys.push_back(e.key);
  return keys;
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config: line " + std::to_string(line_no) + " is not of the form key = value");
    }
    set_config_value(config, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  try {
    config.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const Entry& e : entries()) out += e.key + " = " + e.get(config) + "\n";
  return out;
}

}  // namespace unlearn
