// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

#include <unistd.h>

#include "doctest.h"
#include "fixtures.hpp"
#include "unlearn/checkpoint.hpp"
#include "unlearn/config.hpp"
#include "unlearn/harness.hpp"
#include "unlearn/metrics_io.hpp"

using namespace unlearn;
namespace fs = std::filesystem;

namespace {

const fs::path kMinimal = fs::path(UNLEARN_SOURCE_DIR) / "configs" / "minimal.cfg";

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("unlearn_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string error_of(auto&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

// A teacher for the minimal config, trained once per test binary.
const fs::path& minimal_teacher() {
  static TempDir dir("teacher");
  static const fs::path ckpt = [] {
    std::ostringstream log;
    return cmd_pretrain(PretrainRequest{load_config(kMinimal), std::nullopt, dir.path}, log).paths.checkpoint();
  }();
  return ckpt;
}

UnlearnOutcome run_unlearn(const RunConfig& cfg, const fs::path& out, std::optional<std::uint64_t> steps = {}) {
  UnlearnRequest r;
  r.config = cfg;
  r.teacher = minimal_teacher();
  r.out_dir = out;
  r.steps = steps;
  std::ostringstream log;
  return cmd_unlearn(r, log);
}

MetricsRecord sample_record(std::uint64_t step) {
  MetricsRecord r;
  r.step = step;
  r.images_seen = 32 * step;
  r.loss_psi = 0.1 + 1e-17 * step;
  r.loss_theta = -1.0 / 3.0;
  r.loss_distill = 2.5e-300;
  r.loss_forget = 1e300;
  r.mask_density = 0.25;
  r.mask_threshold = 1.0 / 7.0;
  r.mask_overlap = 1.0;
  r.ua = 0.999;
  r.cover_alignment = 0.5;
  r.frechet = {0.1, 0.2, std::nextafter(0.3, 1.0)};
  r.is = 2.9;
  r.precision = 0.0;
  return r;
}

bool same_row(const MetricsRecord& a, const MetricsRecord& b) { return metrics_row(a, 3) == metrics_row(b, 3); }

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("config: serialize and parse round trip") {
    const RunConfig base = load_config(kMinimal);
    CHECK(serialize_config(parse_config(serialize_config(base))) == serialize_config(base));
    for (const std::string& key : config_keys()) {
      RunConfig copy = parse_config(serialize_config(base));
      CHECK(get_config_value(copy, key) == get_config_value(base, key));
    }
    const RunConfig c = parse_config("# comment\n\n  loss.xi = 1.25  \nmask.q=0.3\n");
    CHECK(c.loss.xi == 1.25);
    CHECK(c.mask.policy.q == 0.3);
    CHECK(get_config_value(c, "train.steps") == get_config_value(RunConfig{}, "train.steps"));
    CHECK_NOTHROW(load_config(fs::path(UNLEARN_SOURCE_DIR) / "configs" / "benchmark.cfg").validate());
  }

  TEST_CASE("config: unknown keys, bad values and missing files") {
    const std::string unknown = error_of([] { parse_config("mask.qq = 0.5\n"); });
    CHECK(unknown.find("mask.qq") != std::string::npos);
    CHECK_THROWS_AS(parse_config("mask.qq = 0.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("train.steps = ten\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("train.method = fancy\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("no equals sign\n"), ConfigError);
    const std::string missing = error_of([] { load_config("/nonexistent/dir/run.cfg"); });
    CHECK(missing.find("/nonexistent/dir/run.cfg") != std::string::npos);
    CHECK_FALSE(has_config_key("bogus"));
    CHECK(has_config_key("loss.xi"));
  }

  TEST_CASE("checkpoint: container round trip and corruption") {
    CheckpointFile f;
    f.kind = "teacher";
    f.config_text = "loss.xi = 1.2\n";
    const std::vector<double> vals{0.1, -0.0, std::numeric_limits<double>::denorm_min(), 1e308};
    f.add_doubles("w", vals);
    f.add("counts", {1, 2, 3});
    const std::string bytes = encode_checkpoint(f);
    const CheckpointFile g = decode_checkpoint(bytes);
    CHECK(g.kind == "teacher");
    CHECK(g.config_text == f.config_text);
    CHECK(encode_checkpoint(g) == bytes);
    const auto back = g.doubles("w");
    for (std::size_t i = 0; i < vals.size(); ++i) CHECK(std::signbit(back[i]) == std::signbit(vals[i]));
    CHECK(back == vals);
    CHECK_THROWS_AS(g.blob("missing"), CheckpointError);

    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x10;
    CHECK_THROWS_AS(decode_checkpoint(flipped), CheckpointError);
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
    CHECK_THROWS_AS(decode_checkpoint("not a checkpoint"), CheckpointError);

    // The version is checked before the checksum.
    std::string future = bytes;
    future[8] = 2;
    const std::string msg = error_of([&] { decode_checkpoint(future); });
    CHECK(msg.find("version") != std::string::npos);
  }

  TEST_CASE("checkpoint: model and train state round trip bit-exactly") {
    const RunConfig cfg = load_config(kMinimal);
    const ModelHandle m = fixtures::random_model(cfg.network(), ModelRole::Teacher, 3);
    RunConfig echo;
    const ModelHandle back = model_from_checkpoint(decode_checkpoint(encode_checkpoint(model_checkpoint(m, cfg, "teacher"))), &echo);
    CHECK(back.params == m.params);
    CHECK(back.role == m.role);
    CHECK(serialize_config(echo) == serialize_config(cfg));

    TrainState s = init_state(m, cfg);
    s.iteration = 7;
    s.images_seen = 224;
    s.rng.normal();
    const std::string bytes = encode_checkpoint(state_checkpoint(s, cfg));
    const TrainState t = state_from_checkpoint(decode_checkpoint(bytes));
    CHECK(encode_checkpoint(state_checkpoint(t, cfg)) == bytes);
    CHECK(t.theta.params == s.theta.params);
    CHECK(t.mask.bits == s.mask.bits);
    Rng a = s.rng, b = t.rng;
    CHECK(a.normal() == b.normal());
    CHECK_THROWS_AS(state_from_checkpoint(model_checkpoint(m, cfg, "teacher")), CheckpointError);

    TempDir dir("ckpt");
    write_checkpoint(dir / "s.ckpt", state_checkpoint(s, cfg));
    CHECK(slurp(dir / "s.ckpt") == bytes);
    CHECK_THROWS_AS(read_checkpoint(dir / "absent.ckpt"), CheckpointError);
  }

  TEST_CASE("metrics: exact text round trip and append-only writer") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e300, std::numeric_limits<double>::denorm_min(), 0.0}) {
      CHECK(parse_real(format_real(v)) == v);
    }
    CHECK(std::isnan(parse_real(format_real(std::nan("")))));
    CHECK(parse_real(format_real(-INFINITY)) == -INFINITY);
    const MetricsRecord r = sample_record(10);
    CHECK(same_row(parse_metrics_row(metrics_row(r, 3), 3), r));
    CHECK_THROWS_AS(metrics_row(r, 4), std::invalid_argument);
    CHECK(metrics_columns(3).size() == 11 + 3 + 2);

    TempDir dir("metrics");
    {
      MetricsWriter w(dir / "m.csv", dir / "t.csv", 3);
      CHECK(w.write(sample_record(0)));
      CHECK(w.write(sample_record(10)));
    }
    const std::string before = slurp(dir / "m.csv");
    {
      MetricsWriter w(dir / "m.csv", dir / "t.csv", 3);
      CHECK(w.last_step() == 10u);
      CHECK_FALSE(w.write(sample_record(10)));
      CHECK_FALSE(w.write(sample_record(5)));
      CHECK(w.write(sample_record(20)));
    }
    const std::string after = slurp(dir / "m.csv");
    CHECK(after.starts_with(before));
    const MetricsTable t = read_metrics(dir / "m.csv");
    CHECK(t.num_classes == 3);
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[2].step == 20);
    CHECK(same_row(t.rows[1], sample_record(10)));
  }

  TEST_CASE("pretrain: same seed gives identical bytes, another seed differs") {
    TempDir dir("pretrain");
    const RunConfig cfg = load_config(kMinimal);
    std::ostringstream log;
    const auto a = cmd_pretrain(PretrainRequest{cfg, std::nullopt, dir / "a"}, log);
    const auto b = cmd_pretrain(PretrainRequest{cfg, std::nullopt, dir / "b"}, log);
    const auto c = cmd_pretrain(PretrainRequest{cfg, cfg.pretrain.seed + 1, dir / "c"}, log);
    CHECK(slurp(a.paths.checkpoint()) == slurp(b.paths.checkpoint()));
    CHECK(slurp(a.paths.checkpoint()) != slurp(c.paths.checkpoint()));
    CHECK(slurp(minimal_teacher()) == slurp(a.paths.checkpoint()));
    CHECK(std::isfinite(a.final_loss));
    CHECK(read_checkpoint(a.paths.checkpoint()).kind == "teacher");
    CHECK(fs::exists(a.paths.dir / "pretrain.csv"));
    CHECK(serialize_config(load_config(a.paths.config())) == serialize_config(cfg));
  }

  TEST_CASE("unlearn: sfd reports full mask density; byte-identical reruns") {
    TempDir dir("sfd");
    RunConfig cfg = load_config(kMinimal);
    cfg.train.method = Method::Sfd;
    const auto a = run_unlearn(cfg, dir / "a");
    const auto b = run_unlearn(cfg, dir / "b");
    const MetricsTable t = read_metrics(a.paths.metrics());
    REQUIRE(t.rows.size() == 3);
    for (const MetricsRecord& r : t.rows) CHECK(r.mask_density == 1.0);
    CHECK(t.rows.back().step == cfg.train.steps);
    CHECK(slurp(a.paths.metrics()) == slurp(b.paths.metrics()));
    CHECK(slurp(a.paths.checkpoint()) == slurp(b.paths.checkpoint()));
    CHECK(read_checkpoint(a.paths.checkpoint()).kind == "unlearn");
  }

  TEST_CASE("unlearn: image budget ends the run") {
    TempDir dir("images");
    RunConfig cfg = load_config(kMinimal);
    UnlearnRequest r;
    r.config = cfg;
    r.teacher = minimal_teacher();
    r.out_dir = dir / "run";
    r.images = 5 * cfg.images_per_step() + 1;
    std::ostringstream log;
    const UnlearnOutcome o = cmd_unlearn(r, log);
    CHECK(o.final_record.step == 6);
    CHECK(o.final_record.images_seen == 6 * cfg.images_per_step());
    CHECK(read_metrics(o.paths.metrics()).rows.back().step == 6);
  }

  TEST_CASE("unlearn: method and teacher mismatches are rejected") {
    TempDir dir("mismatch");
    const RunConfig cfg = load_config(kMinimal);
    std::ostringstream log;
    UnlearnRequest no_teacher;
    no_teacher.config = cfg;
    no_teacher.out_dir = dir / "x";
    CHECK_THROWS_AS(cmd_unlearn(no_teacher, log), std::invalid_argument);

    const auto run = run_unlearn(cfg, dir / "pecker");
    UnlearnRequest wrong_kind = no_teacher;
    wrong_kind.teacher = run.paths.checkpoint();
    const std::string msg = error_of([&] { cmd_unlearn(wrong_kind, log); });
    CHECK(msg.find("unlearn") != std::string::npos);

    UnlearnRequest retrain = no_teacher;
    retrain.method = Method::Retrain;
    retrain.teacher = minimal_teacher();
    CHECK_THROWS_AS(cmd_unlearn(retrain, log), std::invalid_argument);

    UnlearnRequest resume_other;
    resume_other.resume = run.paths.checkpoint();
    resume_other.method = Method::Sfd;
    resume_other.out_dir = dir / "y";
    CHECK_THROWS_AS(cmd_unlearn(resume_other, log), std::invalid_argument);
    CHECK_THROWS_AS(cmd_unlearn(UnlearnRequest{}, log), std::invalid_argument);
  }

  TEST_CASE("unlearn: an interrupted and resumed run matches the uninterrupted one") {
    TempDir dir("resume");
    RunConfig cfg = load_config(kMinimal);
    cfg.train.checkpoint_interval = 5;
    const auto full = run_unlearn(cfg, dir / "full");

    run_unlearn(cfg, dir / "part", 10);
    UnlearnRequest r;
    r.resume = dir / "part" / "final.ckpt";
    r.steps = cfg.train.steps;
    r.out_dir = dir / "part";
    std::ostringstream log;
    const auto resumed = cmd_unlearn(r, log);
    CHECK(slurp(resumed.paths.metrics()) == slurp(full.paths.metrics()));
    CHECK(slurp(resumed.paths.checkpoint()) == slurp(full.paths.checkpoint()));

    // From a periodic checkpoint into a fresh directory.
    UnlearnRequest p;
    p.resume = full.paths.periodic(15);
    p.out_dir = dir / "from15";
    const auto tail = cmd_unlearn(p, log);
    CHECK(same_row(tail.final_record, full.final_record));
    CHECK(slurp(tail.paths.checkpoint()) == slurp(full.paths.checkpoint()));
    CHECK(read_metrics(tail.paths.metrics()).rows.front().step == 20);
  }

  TEST_CASE("retrain: trains from data and writes one row") {
    TempDir dir("retrain");
    RunConfig cfg = load_config(kMinimal);
    UnlearnRequest r;
    r.config = cfg;
    r.method = Method::Retrain;
    r.steps = 10;
    r.out_dir = dir / "run";
    std::ostringstream log;
    const auto o = cmd_unlearn(r, log);
    CHECK(o.final_record.step == 10);
    CHECK(read_metrics(o.paths.metrics()).rows.size() == 1);
    CHECK(read_checkpoint(o.paths.checkpoint()).kind == "retrain");
  }

  TEST_CASE("eval: deterministic report, bad inputs rejected") {
    TempDir dir("eval");
    const auto run = run_unlearn(load_config(kMinimal), dir / "run");
    std::ostringstream out;
    EvalRequest e{run.paths.checkpoint(), std::nullopt, std::size_t{64}, std::uint64_t{3}, dir / "e1.txt"};
    const EvalOutcome a = cmd_eval(e, out);
    e.out_file = dir / "e2.txt";
    const EvalOutcome b = cmd_eval(e, out);
    CHECK(a.sampler == "generator");
    CHECK(a.options.n == 64);
    CHECK(a.text.find("checkpoint=" + run.paths.checkpoint().string()) != std::string::npos);
    CHECK(slurp(dir / "e1.txt") == slurp(dir / "e2.txt"));
    CHECK(a.summary.frechet == b.summary.frechet);

    const EvalOutcome teacher = cmd_eval(EvalRequest{minimal_teacher(), std::nullopt, std::size_t{32}, {}, dir / "t.txt"}, out);
    CHECK(teacher.sampler == "ancestral");

    CHECK_THROWS_AS(cmd_eval(EvalRequest{run.paths.checkpoint(), std::nullopt, std::size_t{0}, {}, dir / "z.txt"}, out),
                    std::invalid_argument);
    std::string bytes = slurp(run.paths.checkpoint());
    bytes[bytes.size() / 3] ^= 0x01;
    std::ofstream(dir / "bad.ckpt", std::ios::binary) << bytes;
    CHECK_THROWS_AS(cmd_eval(EvalRequest{dir / "bad.ckpt", std::nullopt, {}, {}, dir / "b.txt"}, out), CheckpointError);
    RunConfig other = load_config(kMinimal);
    other.data.K = 4;
    CHECK_THROWS_AS(cmd_eval(EvalRequest{run.paths.checkpoint(), other, {}, {}, dir / "k.txt"}, out),
                    std::invalid_argument);
  }

  TEST_CASE("sweep grid parsing") {
    const GridAxis a = parse_grid_axis("mask.q=0.1,0.5,1.0");
    CHECK(a.key == "mask.q");
    CHECK(a.values == std::vector<std::string>{"0.1", "0.5", "1.0"});
    CHECK_THROWS_AS(parse_grid_axis("mask.qq=0.1"), ConfigError);
    CHECK_THROWS_AS(parse_grid_axis("mask.q="), ConfigError);
    CHECK_THROWS_AS(parse_grid_axis("mask.q=0.1,,0.2"), ConfigError);
    CHECK_THROWS_AS(parse_grid_axis("mask.q"), ConfigError);
  }

  TEST_CASE("sweep: q=1 pecker follows the sfd trajectory; empty grid is one run") {
    TempDir dir("sweep");
    RunConfig cfg = load_config(kMinimal);
    std::ostringstream log;
    const SweepOutcome s = cmd_sweep(SweepRequest{cfg, {parse_grid_axis("mask.q=0.1,0.5,1.0")}, minimal_teacher(), dir / "grid", 1}, log);
    REQUIRE(s.runs.size() == 3);
    CHECK(fs::exists(s.aggregate));
    std::ifstream agg(s.aggregate);
    std::string line;
    int lines = 0;
    while (std::getline(agg, line)) ++lines;
    CHECK(lines == 4);

    RunConfig sfd = cfg;
    sfd.train.method = Method::Sfd;
    const auto ref = run_unlearn(sfd, dir / "sfd");
    const TrainState q1 = state_from_checkpoint(read_checkpoint(s.runs[2].checkpoint()));
    const TrainState full = state_from_checkpoint(read_checkpoint(ref.paths.checkpoint()));
    CHECK(q1.theta.params == full.theta.params);
    CHECK(q1.psi.params == full.psi.params);
    const auto rows_q1 = read_metrics(s.runs[2].metrics()).rows;
    const auto rows_sfd = read_metrics(ref.paths.metrics()).rows;
    REQUIRE(rows_q1.size() == rows_sfd.size());
    for (std::size_t i = 0; i < rows_q1.size(); ++i) {
      CHECK(rows_q1[i].loss_theta == rows_sfd[i].loss_theta);
      CHECK(rows_q1[i].ua == rows_sfd[i].ua);
      CHECK(rows_q1[i].frechet == rows_sfd[i].frechet);
    }
    const TrainState q01 = state_from_checkpoint(read_checkpoint(s.runs[0].checkpoint()));
    CHECK(q01.theta.params != full.theta.params);
    CHECK(q01.mask.density == doctest::Approx(0.1).epsilon(0.01));

    const SweepOutcome one = cmd_sweep(SweepRequest{cfg, {}, {}, dir / "one", 1}, log);
    CHECK(one.runs.size() == 1);
    CHECK(fs::exists(dir / "one" / "teacher_00" / "final.ckpt"));
    CHECK_THROWS_AS(cmd_sweep(SweepRequest{cfg, {GridAxis{"bogus", {"1"}}}, minimal_teacher(), dir / "bad", 1}, log),
                    ConfigError);
    CHECK_FALSE(fs::exists(dir / "bad"));
  }
}
