#include "gradsq/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "catch2/catch_amalgamated.hpp"

using namespace gradsq;

namespace {

// published 64 bit FNV-1a values
constexpr std::uint64_t kFnvEmpty = 14695981039346656037ull;
constexpr std::uint64_t kFnvAbc = 16654208175385433931ull;

ExperimentConfig square_config() {
  ExperimentConfig cfg;
  cfg.id = "decay";
  cfg.eps_schedule = {0.125, 0.0625};
  cfg.fs = {TestFunction::make_bump(2, make_rpt({0.5, 0.5}), 0.26)};
  return cfg;
}

double table_value(const Table& t, double eps, double order) {
  for (const auto& r : t.rows)
    if (r[0] == eps && r[1] == order) return r[2];
  FAIL("missing table row");
  return 0.0;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("experiment configs round trip through json") {
  ExperimentConfig cfg;
  cfg.id = "full";
  cfg.domain = DomainSpec::make_unit_disk(2);
  cfg.eps_schedule = {0.25, 0.125};
  cfg.fs = {TestFunction::make_bump(2, make_rpt({0.1, -0.2}), 0.3)};
  cfg.replicates = 250;
  cfg.seed = 77;
  cfg.tolerances = {{"var_rel_tol", 0.2}, {"mc_sigma", 5.0}};
  cfg.out_dir = "out/full";
  cfg.points = {make_rpt({0.3, 0.1}), make_rpt({-0.2, 0.35})};
  cfg.mobius = {{0.2, 0.0}, {-0.1, 0.3}};
  cfg.orders = {2, 3};
  cfg.dim = 2;
  cfg.bigbox_r = 24;

  auto j = cfg.to_json();
  auto back = ExperimentConfig::from_json(j);
  REQUIRE(back.to_json().dump() == j.dump());

  auto bad = j;
  bad["points"] = {{0.1, 0.2, 0.3}};
  REQUIRE_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);

  REQUIRE(detail::fnv1a("") == kFnvEmpty);
  REQUIRE(detail::fnv1a("abc") == kFnvAbc);
  auto rep = detail::start_report(cfg);
  auto rep2 = detail::start_report(cfg);
  REQUIRE(rep.config_hash == rep2.config_hash);
  cfg.id = "other";
  REQUIRE(detail::start_report(cfg).config_hash != rep.config_hash);
}

TEST_CASE("trace cumulants match the partition formula sums") {
  auto cfg = square_config();
  auto rep = run_cumulant_decay(cfg);
  REQUIRE(rep.all_passed());
  const auto& tab = rep.tables.at("cumulant_decay");
  REQUIRE(tab.rows.size() == 6);

  const double eps = 0.125;
  auto dom = discretize(cfg.domain, eps);
  GreenTable g(dom);
  auto w = pairing_weights(dom, cfg.fs[0], PairMode::sum);
  std::vector<int> act;
  for (int v = 0; v < dom.size(); ++v)
    if (w[v] != 0.0) act.push_back(v);
  REQUIRE(act.size() == 13);

  // order three and four against the multilinear cumulant expansion
  KahanSum k3, k4;
  for (int a : act)
    for (int b : act)
      for (int c : act) {
        std::vector<Pt> pts = {dom.vertices[a], dom.vertices[b],
                               dom.vertices[c]};
        double kc = joint_cumulant_exact(g, pts).value;
        k3.add(w[a] * w[b] * w[c] * kc);
        for (int e : act) {
          auto q = pts;
          q.push_back(dom.vertices[e]);
          k4.add(w[a] * w[b] * w[c] * w[e] *
                 joint_cumulant_exact(g, q).value);
        }
      }
  double got3 = table_value(tab, eps, 3.0) / std::pow(eps, 3.0);
  double got4 = table_value(tab, eps, 4.0) / std::pow(eps, 4.0);
  REQUIRE(std::abs(got3 / k3.value() - 1.0) < 1e-10);
  REQUIRE(std::abs(got4 / k4.value() - 1.0) < 1e-10);

  REQUIRE(rep.fitted.at("slope_k3") > 0.4);
  REQUIRE(rep.fitted.count("slope_k2") == 1);
  REQUIRE(rep.fitted.count("slope_k4") == 1);
}

TEST_CASE("whitenoise covariances track the chi limit") {
  ExperimentConfig cfg;
  cfg.id = "whitenoise";
  cfg.eps_schedule = {0.125, 0.0625, 0.03125};
  cfg.fs = {TestFunction::make_bump(2, make_rpt({0.35, 0.35}), 0.15),
            TestFunction::make_bump(2, make_rpt({0.65, 0.65}), 0.15)};
  cfg.replicates = 400;
  cfg.seed = 9;
  cfg.tolerances["chi_quad_tol"] = 1e-3;
  auto rep = run_whitenoise(cfg);

  for (const auto& c : rep.checks)
    INFO(c.name << " observed " << c.observed << " tolerance " << c.tolerance);
  REQUIRE(rep.all_passed());
  REQUIRE(std::abs(rep.fitted.at("chi") - 32.0) < 5e-3);

  const auto& tab = rep.tables.at("whitenoise");
  REQUIRE(tab.rows.size() == 9);  // three levels, three function pairs
  for (const auto& r : tab.rows) {
    if (r[1] == r[2])
      REQUIRE(r[6] > 0.0);  // diagonal limits are chi * ||f||^2
    else
      REQUIRE(r[6] == 0.0);  // disjoint supports
  }
}

TEST_CASE("green differences extrapolate onto the disk kernel") {
  ExperimentConfig cfg;
  cfg.id = "green";
  cfg.domain = DomainSpec::make_unit_disk(2);
  cfg.eps_schedule = {1.0 / 16, 1.0 / 32, 1.0 / 64};
  cfg.points = {make_rpt({0.3, 0.1}), make_rpt({-0.2, 0.35})};
  auto rep = run_green_convergence(cfg);

  for (const auto& c : rep.checks)
    INFO(c.name << " observed " << c.observed << " tolerance " << c.tolerance);
  REQUIRE(rep.all_passed());
  REQUIRE(rep.fitted.at("constant") == Catch::Approx(4.0).margin(0.05));
  REQUIRE(rep.fitted.at("fit_residual") < 0.02);
  REQUIRE(rep.tables.at("rescaled_dd").rows.size() == 12);
  REQUIRE(rep.tables.at("extrapolated").rows.size() == 4);
}

TEST_CASE("mobius covariance holds in the continuum and on fine lattices") {
  ExperimentConfig cfg;
  cfg.id = "conformal";
  cfg.domain = DomainSpec::make_unit_disk(2);
  cfg.eps_schedule = {1.0 / 16, 1.0 / 32, 1.0 / 64};
  cfg.points = {make_rpt({0.3, 0.0}), make_rpt({-0.25, 0.2}),
                make_rpt({0.1, -0.35})};
  cfg.mobius = {{0.2, 0.0}, {0.4, 0.0}};
  auto rep = run_conformal(cfg);

  for (const auto& c : rep.checks)
    INFO(c.name << " observed " << c.observed << " tolerance " << c.tolerance);
  REQUIRE(rep.all_passed());
  for (const auto& r : rep.tables.at("continuum").rows)
    REQUIRE(r[5] < 1e-12);  // exact identity, far below the config tolerance
  REQUIRE(rep.tables.at("discrete").rows.size() == 12);
}

TEST_CASE("chi cross validates both kernel methods") {
  ExperimentConfig cfg;
  cfg.id = "chi";
  cfg.dim = 2;
  cfg.bigbox_r = 24;
  cfg.tolerances = {{"chi_tol", 1e-3},
                    {"chi_tol_fine", 5e-4},
                    {"truncation_abs", 1.5e-3}};
  auto rep = run_chi(cfg);

  for (const auto& c : rep.checks)
    INFO(c.name << " observed " << c.observed << " tolerance " << c.tolerance);
  REQUIRE(rep.all_passed());
  REQUIRE(std::abs(rep.fitted.at("chi") - 32.0) < 5e-3);
  REQUIRE(rep.fitted.at("fourier_truncated") > 16.0);
  REQUIRE(rep.fitted.at("fourier_truncated") < rep.fitted.at("chi") + 1e-3);
  REQUIRE_FALSE(rep.tables.at("radial_bins").rows.empty());
}

TEST_CASE("reports serialize deterministically and land on disk") {
  auto cfg = square_config();
  auto rep1 = run_cumulant_decay(cfg);
  auto rep2 = run_cumulant_decay(cfg);
  REQUIRE(rep1.to_json().dump() == rep2.to_json().dump());

  namespace fs = std::filesystem;
  fs::path base = fs::temp_directory_path() / "gradsq_report_test";
  fs::remove_all(base);
  write_report(rep1, (base / "a").string());
  write_report(rep2, (base / "b").string());
  REQUIRE(slurp((base / "a" / "report.json").string()) ==
          slurp((base / "b" / "report.json").string()));

  auto parsed = nlohmann::json::parse(slurp((base / "a" / "report.json").string()));
  REQUIRE(parsed.at("id") == "decay");
  REQUIRE(parsed.at("checks").size() == rep1.checks.size());

  std::string csv = slurp((base / "a" / "cumulant_decay.csv").string());
  std::size_t lines = std::count(csv.begin(), csv.end(), '\n');
  REQUIRE(lines == 1 + rep1.tables.at("cumulant_decay").rows.size());
  REQUIRE(csv.rfind("eps,order,kappa_scaled\n", 0) == 0);
  fs::remove_all(base);
}

TEST_CASE("experiment drivers validate their configs") {
  auto cfg = square_config();

  auto inc = cfg;
  inc.eps_schedule = {0.0625, 0.125};
  REQUIRE_THROWS_AS(run_cumulant_decay(inc), ConfigError);

  auto empt = cfg;
  empt.eps_schedule.clear();
  REQUIRE_THROWS_AS(run_cumulant_decay(empt), ConfigError);

  auto ord = cfg;
  ord.orders = {5};
  REQUIRE_THROWS_AS(run_cumulant_decay(ord), ConfigError);

  auto wn = cfg;
  wn.eps_schedule = {0.25, 0.125, 0.0625};
  wn.replicates = 50;
  REQUIRE_THROWS_AS(run_whitenoise(wn), InsufficientReplicates);
  wn.replicates = 200;
  wn.fs.clear();
  REQUIRE_THROWS_AS(run_whitenoise(wn), ConfigError);

  ExperimentConfig gc;
  gc.domain = DomainSpec::make_unit_disk(2);
  gc.eps_schedule = {0.25, 0.125, 0.0625};
  gc.points = {make_rpt({0.3, 0.1})};
  REQUIRE_THROWS_AS(run_green_convergence(gc), ConfigError);
  gc.points.push_back(make_rpt({-0.2, 0.35}));
  gc.domain = DomainSpec::make_unit_square(2);
  REQUIRE_THROWS_AS(run_green_convergence(gc), ConfigError);

  ExperimentConfig cf;
  cf.domain = DomainSpec::make_unit_disk(2);
  cf.eps_schedule = {0.125, 0.0625};
  cf.points = {make_rpt({0.3, 0.0}), make_rpt({-0.25, 0.2})};
  REQUIRE_THROWS_AS(run_conformal(cf), ConfigError);  // no mobius params
  cf.mobius = {{0.7, 0.0}};
  REQUIRE_THROWS_AS(run_conformal(cf), ConfigError);  // |a| too large
}
