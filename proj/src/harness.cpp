// SPDX-License-Identifier: Apache-2.0
#include "unlearn/harness.hpp"

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "unlearn/checkpoint.hpp"
#include "unlearn/config.hpp"
#include "unlearn/metrics_io.hpp"

namespace unlearn {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void log_record(std::ostream& log, const MetricsRecord& r) {
  log << "step " << r.step << " images " << r.images_seen << " ua " << format_real(r.ua) << " cover "
      << format_real(r.cover_alignment) << " mask " << format_real(r.mask_density) << "\n";
}

EvalSummary evaluate_with(const Sampler& sampler, const MixtureDataset& data, const RunConfig& cfg) {
  return evaluate(sampler, data, cfg.classes.forget, cfg.classes.cover, cfg.eval_options());
}

void fill_eval(MetricsRecord& rec, const EvalSummary& e) {
  rec.ua = e.ua.ua;
  rec.cover_alignment = e.ua.cover_alignment;
  rec.frechet = e.frechet;
  rec.is = e.is;
  rec.precision = e.precision;
}

UnlearnOutcome run_retrain_cmd(RunConfig cfg, const UnlearnRequest& req, std::ostream& log) {
  if (!req.teacher.empty()) throw std::invalid_argument("method retrain trains from data and takes no --teacher");
  if (!req.resume.empty()) throw std::invalid_argument("method retrain does not support --resume");
  if (req.images) throw std::invalid_argument("method retrain does not support --images");
  if (req.steps) cfg.pretrain.steps = *req.steps;
  cfg.validate();

  RunPaths paths{req.out_dir.empty() ? default_output_root() / ("unlearn_retrain_seed" + std::to_string(cfg.train.seed))
                                     : req.out_dir};
  fs::create_directories(paths.dir);
  fs::remove(paths.metrics());
  fs::remove(paths.timing());
  write_text(paths.config(), serialize_config(cfg));

  const MixtureDataset data = cfg.dataset();
  const PretrainResult r = run_retrain(data, cfg);
  const NoiseSchedule sched = cfg.schedule();
  MetricsRecord rec;
  rec.step = cfg.pretrain.steps;
  rec.images_seen = cfg.pretrain.steps * cfg.pretrain.batch;
  rec.loss_theta = r.losses.empty() ? 0.0 : r.losses.back();
  fill_eval(rec, evaluate_with(ancestral_sampler(r.model, sched), data, cfg));
  MetricsWriter writer(paths.metrics(), paths.timing(), cfg.data.K);
  writer.write(rec);
  log_record(log, rec);
  write_checkpoint(paths.checkpoint(), model_checkpoint(r.model, cfg, "retrain"));
  return UnlearnOutcome{paths, cfg, rec};
}

std::string teacher_key(const RunConfig& cfg) {
  std::string key;
  for (const std::string& k : config_keys()) {
    if (k.starts_with("sched.") || k.starts_with("net.") || k.starts_with("data.") || k.starts_with("pretrain.") ||
        k == "opt.beta1" || k == "opt.beta2" || k == "opt.eps") {
      key += k + "=" + get_config_value(cfg, k) + "\n";
    }
  }
  return key;
}

}  // namespace

fs::path default_output_root() {
  const char* env = std::getenv("UNLEARNLAB_OUT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

fs::path RunPaths::periodic(std::uint64_t iteration) const {
  char name[48];
  std::snprintf(name, sizeof(name), "ckpt_%08llu.ckpt", static_cast<unsigned long long>(iteration));
  return dir / name;
}

PretrainOutcome cmd_pretrain(const PretrainRequest& req, std::ostream& log) {
  RunConfig cfg = req.config;
  if (req.seed) cfg.pretrain.seed = *req.seed;
  cfg.validate();
  RunPaths paths{req.out_dir.empty() ? default_output_root() / ("teacher_seed" + std::to_string(cfg.pretrain.seed))
                                     : req.out_dir};
  fs::create_directories(paths.dir);
  write_text(paths.config(), serialize_config(cfg));

  const PretrainResult r = pretrain_teacher(cfg.dataset(), cfg);
  std::ofstream csv(paths.dir / "pretrain.csv", std::ios::trunc);
  csv << "step,loss\n";
  for (std::size_t i = 0; i < r.losses.size(); ++i) csv << i + 1 << "," << format_real(r.losses[i]) << "\n";
  write_checkpoint(paths.checkpoint(), model_checkpoint(r.model, cfg, "teacher"));
  const double final_loss = r.losses.empty() ? 0.0 : r.losses.back();
  log << "pretrained " << r.losses.size() << " steps, final loss " << format_real(final_loss) << ", wrote "
      << paths.checkpoint().string() << "\n";
  return PretrainOutcome{paths, final_loss};
}

UnlearnOutcome cmd_unlearn(const UnlearnRequest& req, std::ostream& log) {
  RunConfig cfg;
  TrainState state;
  const bool resuming = !req.resume.empty();
  if (resuming) {
    const CheckpointFile f = read_checkpoint(req.resume);
    state = state_from_checkpoint(f, &cfg);
    if (req.method && *req.method != cfg.train.method) {
      throw std::invalid_argument(std::string("--method ") + method_name(*req.method) + " differs from the resumed run (" +
                                  method_name(cfg.train.method) + ")");
    }
    if (req.seed && *req.seed != cfg.train.seed) throw std::invalid_argument("--seed differs from the resumed run");
    if (!req.teacher.empty()) throw std::invalid_argument("a resumed run carries its teacher; drop --teacher");
  } else {
    if (!req.config) throw std::invalid_argument("unlearn needs a config unless resuming");
    cfg = *req.config;
    if (req.method) cfg.train.method = *req.method;
    if (req.seed) cfg.train.seed = *req.seed;
  }
  if (cfg.train.method == Method::Retrain) return run_retrain_cmd(cfg, req, log);
  if (req.steps) cfg.train.steps = *req.steps;
  if (req.images) cfg.train.images = *req.images;
  cfg.validate();

  if (!resuming) {
    if (req.teacher.empty()) {
      throw std::invalid_argument(std::string("method ") + method_name(cfg.train.method) + " needs --teacher");
    }
    const CheckpointFile f = read_checkpoint(req.teacher);
    if (f.kind != "teacher") {
      throw std::invalid_argument("--teacher " + req.teacher.string() + " holds a '" + f.kind + "' checkpoint");
    }
    state = init_state(model_from_checkpoint(f), cfg);
  }

  RunPaths paths{req.out_dir.empty() ? default_output_root() / (std::string("unlearn_") + method_name(cfg.train.method) +
                                                               "_seed" + std::to_string(cfg.train.seed))
                                     : req.out_dir};
  fs::create_directories(paths.dir);
  if (!resuming) {
    fs::remove(paths.metrics());
    fs::remove(paths.timing());
  }
  write_text(paths.config(), serialize_config(cfg));

  const MixtureDataset data = cfg.dataset();
  const NoiseSchedule sched = cfg.schedule();
  MetricsWriter writer(paths.metrics(), paths.timing(), cfg.data.K);
  std::optional<MetricsRecord> last;
  RunHooks hooks;
  hooks.evaluate = [&](const ModelHandle& gen) { return evaluate_with(generator_sampler(gen, sched), data, cfg); };
  hooks.on_metrics = [&](const MetricsRecord& rec) {
    if (writer.write(rec)) log_record(log, rec);
    last = rec;
  };
  hooks.on_checkpoint = [&](const TrainState& s) { write_checkpoint(paths.periodic(s.iteration), state_checkpoint(s, cfg)); };
  hooks.on_step = req.on_step;
  run_unlearning(state, cfg, hooks);
  write_checkpoint(paths.checkpoint(), state_checkpoint(state, cfg));

  if (!last) {
    const MetricsTable t = read_metrics(paths.metrics());
    if (!t.rows.empty()) last = t.rows.back();
  }
  return UnlearnOutcome{paths, cfg, last.value_or(MetricsRecord{})};
}

EvalOutcome cmd_eval(const EvalRequest& req, std::ostream& out) {
  if (req.n && *req.n == 0) throw std::invalid_argument("--n must be positive");
  const CheckpointFile f = read_checkpoint(req.checkpoint);
  RunConfig cfg = checkpoint_config(f);
  if (req.dataset_config) {
    if (req.dataset_config->data.K != cfg.data.K) {
      throw std::invalid_argument("dataset config has " + std::to_string(req.dataset_config->data.K) +
                                  " classes, the checkpoint network has " + std::to_string(cfg.data.K));
    }
    cfg.data = req.dataset_config->data;
    cfg.classes = req.dataset_config->classes;
  }
  if (req.n) cfg.eval.n = *req.n;
  if (req.seed) cfg.eval.seed = *req.seed;
  cfg.validate();

  EvalOutcome outcome;
  outcome.options = cfg.eval_options();
  const NoiseSchedule sched = cfg.schedule();
  const MixtureDataset data = cfg.dataset();
  if (f.kind == "unlearn") {
    const TrainState s = state_from_checkpoint(f);
    outcome.sampler = "generator";
    outcome.summary = evaluate_with(generator_sampler(s.theta, sched), data, cfg);
  } else if (f.kind == "teacher" || f.kind == "retrain") {
    const ModelHandle m = model_from_checkpoint(f);
    outcome.sampler = "ancestral";
    outcome.summary = evaluate_with(ancestral_sampler(m, sched), data, cfg);
  } else {
    throw CheckpointError("checkpoint: unknown kind '" + f.kind + "'");
  }

  std::ostringstream text;
  const EvalSummary& e = outcome.summary;
  text << "checkpoint=" << req.checkpoint.string() << "\nkind=" << f.kind << "\nsampler=" << outcome.sampler
       << "\nn=" << outcome.options.n << "\nseed=" << outcome.options.seed << "\nprecision_n="
       << outcome.options.precision_n << "\nk=" << outcome.options.k << "\nforget_class=" << cfg.classes.forget
       << "\ncover_class=" << cfg.classes.cover << "\nua=" << format_real(e.ua.ua)
       << "\ncover_alignment=" << format_real(e.ua.cover_alignment) << "\nforget_rate=" << format_real(e.ua.forget_rate)
       << "\n";
  for (std::size_t c = 0; c < e.frechet.size(); ++c) text << "frechet_" << c << "=" << format_real(e.frechet[c]) << "\n";
  text << "is=" << format_real(e.is) << "\nprecision=" << format_real(e.precision) << "\n";
  outcome.text = text.str();
  out << outcome.text;
  const fs::path dest = req.out_file.empty() ? req.checkpoint.parent_path() / "eval.txt" : req.out_file;
  write_text(dest, outcome.text);
  return outcome;
}

GridAxis parse_grid_axis(std::string_view spec) {
  const auto eq = spec.find('=');
  if (eq == std::string_view::npos) throw ConfigError("grid: expected key=v1,v2,... but got '" + std::string(spec) + "'");
  GridAxis axis{std::string(spec.substr(0, eq)), {}};
  if (!has_config_key(axis.key)) throw ConfigError("grid: unknown key '" + axis.key + "'");
  std::string_view rest = spec.substr(eq + 1);
  std::size_t start = 0;
  while (start <= rest.size() && !rest.empty()) {
    const auto end = std::min(rest.find(',', start), rest.size());
    if (end == start) throw ConfigError("grid: empty value for " + axis.key);
    axis.values.emplace_back(rest.substr(start, end - start));
    start = end + 1;
  }
  if (axis.values.empty()) throw ConfigError("grid: no values for " + axis.key);
  return axis;
}

SweepOutcome cmd_sweep(const SweepRequest& req, std::ostream& log) {
  for (const GridAxis& a : req.grid) {
    if (!has_config_key(a.key)) throw ConfigError("grid: unknown key '" + a.key + "'");
    if (a.values.empty()) throw ConfigError("grid: no values for " + a.key);
  }
  std::size_t total = 1;
  for (const GridAxis& a : req.grid) total *= a.values.size();

  // Expand and validate every combination before running anything.
  std::vector<RunConfig> configs;
  std::vector<std::vector<std::string>> labels;
  for (std::size_t i = 0; i < total; ++i) {
    RunConfig cfg = req.base;
    std::vector<std::string> vals;
    std::size_t rem = i;
    for (std::size_t a = req.grid.size(); a-- > 0;) {
      const GridAxis& axis = req.grid[a];
      const std::string& v = axis.values[rem % axis.values.size()];
      rem /= axis.values.size();
      set_config_value(cfg, axis.key, v);
      vals.insert(vals.begin(), v);
    }
    cfg.validate();
    configs.push_back(cfg);
    labels.push_back(vals);
  }

  const fs::path root = req.out_dir.empty() ? default_output_root() / "sweep" : req.out_dir;
  fs::create_directories(root);

  // Teachers are trained up front, one per distinct teacher-relevant config.
  std::vector<fs::path> teachers(total);
  std::map<std::string, fs::path> trained;
  for (std::size_t i = 0; i < total; ++i) {
    if (configs[i].train.method == Method::Retrain) continue;
    if (!req.teacher.empty()) {
      teachers[i] = req.teacher;
      continue;
    }
    const std::string key = teacher_key(configs[i]);
    auto it = trained.find(key);
    if (it == trained.end()) {
      char name[32];
      std::snprintf(name, sizeof(name), "teacher_%02zu", trained.size());
      PretrainRequest pr{configs[i], std::nullopt, root / name};
      it = trained.emplace(key, cmd_pretrain(pr, log).paths.checkpoint()).first;
    }
    teachers[i] = it->second;
  }

  std::vector<RunPaths> runs(total);
  std::vector<MetricsRecord> finals(total);
  std::vector<std::string> logs(total);
  std::vector<std::exception_ptr> errors(total);
  for (std::size_t i = 0; i < total; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "run_%03zu", i);
    runs[i].dir = root / name;
  }

  std::mutex next_lock;
  std::size_t next = 0;
  auto worker = [&] {
    while (true) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> g(next_lock);
        if (next >= total) return;
        i = next++;
      }
      try {
        std::ostringstream run_log;
        UnlearnRequest ur;
        ur.config = configs[i];
        ur.teacher = teachers[i];
        ur.out_dir = runs[i].dir;
        finals[i] = cmd_unlearn(ur, run_log).final_record;
        logs[i] = run_log.str();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::size_t jobs = req.jobs ? req.jobs : std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, total);
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < total; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    log << runs[i].dir.filename().string() << ":\n" << logs[i];
  }

  SweepOutcome outcome{runs, root / "aggregate.csv"};
  std::ofstream agg(outcome.aggregate, std::ios::trunc);
  agg << "run";
  for (const GridAxis& a : req.grid) agg << "," << a.key;
  agg << "," << metrics_header(req.base.data.K) << "\n";
  for (std::size_t i = 0; i < total; ++i) {
    agg << runs[i].dir.filename().string();
    for (const std::string& v : labels[i]) agg << "," << v;
    agg << "," << metrics_row(finals[i], configs[i].data.K) << "\n";
  }
  return outcome;
}

}  // namespace unlearn
