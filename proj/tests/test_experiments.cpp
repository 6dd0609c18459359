#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "walsh/experiments.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace walsh;

namespace {

ExperimentConfig small_config(const std::string& id) {
  ExperimentConfig cfg;
  cfg.experiment_id = id;
  cfg.n_paths = 120;
  cfg.master_seed = 424242;
  cfg.out_dir = "test_results";
  return cfg;
}

std::string strip_wallclock(const std::string& csv) {
  std::stringstream in(csv), out;
  std::string line;
  while (std::getline(in, line)) {
    const auto last_comma = line.find_last_of(',');
    out << line.substr(0, last_comma) << '\n';
  }
  return out.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("registry covers every experiment id") {
  const auto& registry = experiment_registry();
  REQUIRE(registry.size() == 14);
  for (const std::string id : {"E1", "E2", "E3", "E4", "E5", "E6", "E7", "E8a", "E8b",
                               "E9", "E10", "E11", "E12", "E13"}) {
    const bool found = std::any_of(registry.begin(), registry.end(),
                                   [&](const ExperimentInfo& e) { return e.id == id; });
    CHECK(found);
  }
  for (const ExperimentInfo& e : registry) CHECK(!e.claim_ref.empty());
}

TEST_CASE("unknown experiment id is a configuration error") {
  CHECK_THROWS_AS(run_experiment(small_config("E99")), std::invalid_argument);
}

TEST_CASE("estimates are identical for any worker count") {
  ExperimentConfig one = small_config("E8a");
  one.workers = 1;
  ExperimentConfig two = small_config("E8a");
  two.workers = 2;
  const auto a = run_experiment(one);
  const auto b = run_experiment(two);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].estimate == b[i].estimate);  // bit-identical reduction
    CHECK(a[i].stderror == b[i].stderror);
    CHECK(a[i].statistic_name == b[i].statistic_name);
  }
}

TEST_CASE("reruns produce byte-identical CSV apart from the wall-clock column") {
  const ExperimentConfig cfg = small_config("E8a");
  const auto records = run_experiment(cfg);
  emit_results(records, cfg, "test_results_a");
  const auto records2 = run_experiment(cfg);
  emit_results(records2, cfg, "test_results_b");
  const std::string a = read_file("test_results_a/results.csv");
  const std::string b = read_file("test_results_b/results.csv");
  CHECK(strip_wallclock(a) == strip_wallclock(b));
  CHECK(!a.empty());
}

TEST_CASE("empty record list yields a header-only CSV and a zero-record summary") {
  const ExperimentConfig cfg = small_config("E8a");
  emit_results({}, cfg, "test_results_empty");
  const std::string csv = read_file("test_results_empty/results.csv");
  CHECK(csv ==
        "experiment_id,claim_ref,statistic_name,estimate,stderr,ci_low,ci_high,"
        "n_paths,n_rays,probs,t,dt,r,master_seed,pass,wallclock_s\n");
  const std::string summary = read_file("test_results_empty/summary.json");
  CHECK(summary.find("\"records\": []") != std::string::npos);
  CHECK(summary.find("\"suite_pass\": true") != std::string::npos);
}

TEST_CASE("config files parse exactly the documented keys") {
  {
    std::ofstream out("test_config.conf");
    out << "# comment line\n"
        << "experiment_id = E8a\n"
        << "n_rays = 3\n"
        << "probs = 0.5, 0.25, 0.25\n"
        << "t = 2.0\n"
        << "dt = 1e-2, 1e-3\n"
        << "n_paths = 150\n"
        << "r = 0.5\n"
        << "master_seed = 77\n"
        << "workers = 1\n"
        << "out_dir = somewhere\n";
  }
  const ExperimentConfig cfg = config_from_file("test_config.conf");
  CHECK(cfg.experiment_id == "E8a");
  CHECK(*cfg.n_rays == 3);
  REQUIRE(cfg.probs.has_value());
  CHECK(cfg.probs->size() == 3);
  CHECK((*cfg.probs)[1] == doctest::Approx(0.25));
  CHECK(*cfg.t == doctest::Approx(2.0));
  CHECK(cfg.dt->size() == 2);
  CHECK(*cfg.n_paths == 150);
  CHECK(cfg.master_seed == 77);
  CHECK(cfg.out_dir == "somewhere");

  {
    std::ofstream out("test_config_bad.conf");
    out << "mystery_key = 1\n";
  }
  CHECK_THROWS_AS(config_from_file("test_config_bad.conf"), std::invalid_argument);
}

TEST_CASE("replay reconstructs the recorded configuration") {
  ExperimentConfig cfg = small_config("E8a");
  cfg.r = std::vector<double>{0.25, 0.75};
  cfg.dt = std::vector<double>{2e-3};
  const auto records = run_experiment(cfg);
  emit_results(records, cfg, "test_results_replay");

  const ExperimentConfig replayed = config_from_summary("test_results_replay/summary.json");
  CHECK(replayed.experiment_id == cfg.experiment_id);
  CHECK(*replayed.n_paths == *cfg.n_paths);
  CHECK(replayed.master_seed == cfg.master_seed);
  REQUIRE(replayed.r.has_value());
  CHECK((*replayed.r)[1] == doctest::Approx(0.75));

  const auto rerun = run_experiment(replayed);
  REQUIRE(rerun.size() == records.size());
  for (std::size_t i = 0; i < rerun.size(); ++i)
    CHECK(rerun[i].estimate == records[i].estimate);
}

TEST_CASE("records carry the replay anchors") {
  const auto records = run_experiment(small_config("E8a"));
  REQUIRE(!records.empty());
  for (const ResultRecord& rec : records) {
    CHECK(rec.master_seed == 424242);
    CHECK(rec.config_hash.size() == 16);
    CHECK(rec.config_hash == records.front().config_hash);
    CHECK(rec.ci_low <= rec.estimate + 1e-12);
    CHECK(rec.estimate <= rec.ci_high + 1e-12);
  }
}

TEST_CASE("mesh lists must strictly decrease") {
  ExperimentConfig cfg = small_config("E2");
  cfg.dt = std::vector<double>{1e-3, 1e-3};
  CHECK_THROWS_AS(run_experiment(cfg), std::invalid_argument);
}

TEST_CASE("i/o failures surface as runtime errors") {
  CHECK_THROWS_AS(config_from_summary("no_such_summary.json"), std::runtime_error);
  CHECK_THROWS_AS(config_from_file("no_such_config.conf"), std::runtime_error);
  const ExperimentConfig cfg = small_config("E8a");
  CHECK_THROWS_AS(emit_results({}, cfg, "/proc/not_writable/results"),
                  std::runtime_error);
}

TEST_CASE("parallel_for covers every index exactly once") {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(1000, 4, [&](std::int64_t i) { hits[i].fetch_add(1); });
  for (const auto& h : hits) CHECK(h.load() == 1);
}
