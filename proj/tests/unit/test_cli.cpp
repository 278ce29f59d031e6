#include "shrinker/config.hpp"
#include "shrinker/report.hpp"
#include "shrinker/workflows.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace shrinker;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
  const fs::path p = fs::temp_directory_path() / ("shrinker_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig verify_config(int res, const fs::path& out, std::vector<std::string> suite = {"all"})
{
  RunConfig c;
  c.command = Command::Verify;
  c.resolution = res;
  c.output_dir = out.string();
  c.verify.suite = std::move(suite);
  return c;
}

int run_quiet(const RunConfig& c, std::string* err_text = nullptr, RunOutcome* o = nullptr)
{
  std::ostringstream log, err;
  const int code = run(c, log, err, o);
  if (err_text) *err_text = err.str();
  return code;
}

int shell(const std::string& cmd)
{
  const int st = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

const char* cli() { return SHRINKER_CLI_PATH; }

Json strip_timestamp(Json j)
{
  j.erase("timestamp");
  return j;
}

}  // namespace

TEST(Config, ParsesSectionsAndComments)
{
  RunConfig c;
  parse_config_text("seed = 9  # top-level keys belong to run\n"
                    "[model]\nkind = cylinder\nn = 3\nk = 2\n"
                    "; grid block\n[grid]\nresolution = 48\nstencil_order = 4\nclosure = natural\n"
                    "[propagate]\nepsilon = 1e-3, 1e-2\n",
                    c);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.model.kind, ModelKind::Cylinder);
  EXPECT_EQ(c.model.k, 2);
  EXPECT_EQ(c.resolution, 48);
  EXPECT_EQ(c.stencil_order, 4);
  EXPECT_EQ(c.closure, Closure::Natural);
  EXPECT_EQ(c.propagate.epsilon, (std::vector<double>{1e-3, 1e-2}));
}

TEST(Config, UnknownKeyReportsLineAndField)
{
  RunConfig c;
  try {
    parse_config_text("[grid]\nresolution = 32\nresolutoin = 64\n", c, "run.cfg");
    FAIL() << "expected an error";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line, 3);
    EXPECT_EQ(e.field, "grid.resolutoin");
    EXPECT_NE(std::string(e.what()).find("run.cfg:3:"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("unknown key"), std::string::npos);
  }
}

TEST(Config, MalformedInputsRejected)
{
  auto fails = [](const std::string& text, int line) {
    RunConfig c;
    try {
      parse_config_text(text, c);
    } catch (const ConfigError& e) {
      return e.line == line;
    }
    return false;
  };
  EXPECT_TRUE(fails("[nowhere]\n", 1));
  EXPECT_TRUE(fails("[grid\n", 1));
  EXPECT_TRUE(fails("\n[grid]\nresolution\n", 3));
  EXPECT_TRUE(fails("[grid]\nresolution = 32\nresolution = 64\n", 3));
  EXPECT_TRUE(fails("[grid]\nresolution = many\n", 2));
  EXPECT_TRUE(fails("[model]\nkind = torus\n", 2));
  EXPECT_TRUE(fails("[grid]\nresolution = 32.5\n", 2));
}

TEST(Config, EveryKeyIsSettable)
{
  const auto keys = config_key_names();
  EXPECT_GE(keys.size(), 25u);
  for (const std::string& k : std::vector<std::string>{"run.seed", "model.kind", "grid.resolution", "verify.suite",
                                                       "spectrum.count", "propagate.r"})
    EXPECT_NE(std::find(keys.begin(), keys.end(), k), keys.end()) << k;
}

TEST(Config, ValidationNamesTheField)
{
  auto field_of = [](RunConfig c) {
    try {
      validate(c);
    } catch (const ConfigError& e) {
      return e.field;
    }
    return std::string();
  };
  RunConfig c;
  c.resolution = 8;
  EXPECT_EQ(field_of(c), "grid.resolution");
  c = RunConfig{};
  c.model.kind = ModelKind::Cylinder;
  c.model.n = 3;
  c.model.k = 1;
  EXPECT_EQ(field_of(c), "model.k");
  c = RunConfig{};
  c.command = Command::Propagate;
  c.propagate.r = 9.0;
  c.truncation_radius = 8.0;
  EXPECT_EQ(field_of(c), "propagate.r");
  c = RunConfig{};
  c.verify.suite = {"nonsense"};
  EXPECT_EQ(field_of(c), "verify.suite");
  c = RunConfig{};
  c.jobs = 0;
  EXPECT_EQ(field_of(c), "run.jobs");
  EXPECT_EQ(field_of(RunConfig{}), "");
}

TEST(Config, PropagateDefaultRadiusLeavesOuterAnnulus)
{
  RunConfig c;
  c.command = Command::Propagate;
  c.propagate.r = 5.0;
  EXPECT_GT(c.resolved_truncation_radius(), 10.0);
  c.command = Command::Verify;
  EXPECT_EQ(c.resolved_truncation_radius(), 8.0);
}

TEST(Run, PropagateRadiusBeyondTruncationIsUsageError)
{
  RunConfig c;
  c.command = Command::Propagate;
  c.propagate.r = 9.0;
  c.truncation_radius = 8.0;
  c.output_dir = scratch("r_too_big").string();
  std::string err;
  EXPECT_EQ(run_quiet(c, &err), 2);
  EXPECT_NE(err.find("r exceeds truncation_radius"), std::string::npos);
}

TEST(Run, VerifyGaussianPlanePasses)
{
  const auto out = scratch("verify64");
  RunOutcome o;
  ASSERT_EQ(run_quiet(verify_config(64, out), nullptr, &o), 0);
  const Json rep = read_json((out / "report.json").string());
  EXPECT_EQ(rep["schema_version"], report_schema_version);
  EXPECT_EQ(rep["command"], "verify");
  EXPECT_TRUE(rep["pass"].get<bool>());
  EXPECT_EQ(rep["config"]["grid"]["resolution"], 64);
  EXPECT_EQ(rep["config"]["model"]["kind"], "gaussian");
  // Every identity residual is present for every field.
  std::set<std::string> names;
  for (const auto& id : rep["identities"]) {
    names.insert(id["identity_name"].get<std::string>());
    EXPECT_EQ(id["resolution"], 64);
    EXPECT_EQ(id["stencil_order"], 2);
    EXPECT_TRUE(id.contains("residual"));
  }
  for (const char* id : {"claim1", "claim2", "bochner", "firstc"}) {
    bool found = false;
    for (const auto& n : names) found = found || n.find(id) != std::string::npos;
    EXPECT_TRUE(found) << id;
  }
  for (const auto& ch : rep["checks"]) {
    for (const char* k : {"check_name", "model", "resolution", "residuals", "verdict", "pass"})
      EXPECT_TRUE(ch.contains(k)) << k;
  }
}

TEST(Run, ReportsAreDeterministicApartFromTimestamp)
{
  const auto a = scratch("det_a"), b = scratch("det_b");
  RunConfig c = verify_config(32, a, {"soliton", "dichotomy", "cao_zhou"});
  run_quiet(c);
  c.output_dir = b.string();
  run_quiet(c);
  Json ja = strip_timestamp(read_json((a / "report.json").string()));
  Json jb = strip_timestamp(read_json((b / "report.json").string()));
  ja["config"].erase("output_dir");
  jb["config"].erase("output_dir");
  EXPECT_EQ(ja.dump(), jb.dump());
}

TEST(Run, JobsDoNotChangeResults)
{
  const auto a = scratch("jobs_a"), b = scratch("jobs_b");
  RunConfig c = verify_config(32, a, {"soliton", "adjointness", "identities"});
  run_quiet(c);
  c.output_dir = b.string();
  c.jobs = 3;
  run_quiet(c);
  const Json ja = read_json((a / "report.json").string());
  const Json jb = read_json((b / "report.json").string());
  EXPECT_EQ(ja["checks"].dump(), jb["checks"].dump());
}

TEST(Run, SpectrumOfTheLine)
{
  const auto out = scratch("spectrum_line");
  RunConfig c;
  c.command = Command::Spectrum;
  c.model.n = 1;
  c.spectrum.count = 4;
  c.output_dir = out.string();
  const int code = run_quiet(c);
  EXPECT_TRUE(code == 0 || code == 1);
  const Json rep = read_json((out / "report.json").string());
  ASSERT_EQ(rep["spectrum"].size(), 4u);
  EXPECT_NEAR(rep["spectrum"][0]["mu"].get<double>(), 0.0, 1e-4);
  EXPECT_NEAR(rep["spectrum"][1]["mu"].get<double>(), 0.5, 1e-3);
  for (const auto& p : rep["spectrum"]) {
    EXPECT_TRUE(p.contains("residual"));
    EXPECT_TRUE(p.contains("norm_checks"));
  }
}

TEST(Run, CompareIdentityConvergence)
{
  const auto a = scratch("cmp32"), b = scratch("cmp64");
  run_quiet(verify_config(32, a, {"identities"}));
  run_quiet(verify_config(64, b, {"identities"}));
  const ConvergenceTable t =
      compare_runs(read_json((a / "report.json").string()), read_json((b / "report.json").string()));
  EXPECT_EQ(t.resolution_coarse, 32);
  EXPECT_EQ(t.resolution_fine, 64);
  int rows = 0;
  for (const auto& r : t.rows) {
    if (r.check_name.rfind("identity.", 0) != 0) continue;
    ++rows;
    EXPECT_GT(r.ratio, 3.0) << r.check_name;
    EXPECT_LT(r.ratio, 5.5) << r.check_name;
  }
  EXPECT_GT(rows, 0);
}

TEST(Run, CompareFlagsIdenticalReports)
{
  const auto a = scratch("cmp_same");
  run_quiet(verify_config(32, a, {"identities"}));
  const Json j = read_json((a / "report.json").string());
  const ConvergenceTable t = compare_runs(j, j);
  EXPECT_TRUE(t.any_flagged());
  for (const auto& r : t.rows) {
    EXPECT_TRUE(r.flagged) << r.check_name;
    if (r.error_fine > 0.0) {
      EXPECT_DOUBLE_EQ(r.ratio, 1.0) << r.check_name;
    }
  }
}

TEST(Run, CompareRejectsMismatchedCommands)
{
  Json a{{"command", "verify"}, {"checks", Json::array()}};
  Json b{{"command", "spectrum"}, {"checks", Json::array()}};
  try {
    compare_runs(a, b);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("mismatched commands"), std::string::npos);
  }
}

TEST(Run, CompareFlagsSlowConvergence)
{
  auto report = [](int res, double err) {
    Json j{{"command", "verify"}, {"model", {{"kind", "gaussian"}, {"n", 2}}}};
    j["grid"] = {{"resolution", res}, {"stencil_order", 2}};
    j["checks"] = Json::array({Json{{"check_name", "x"}, {"error", err}}});
    return j;
  };
  const auto slow = compare_runs(report(32, 1e-2), report(64, 5e-3));
  EXPECT_TRUE(slow.rows[0].flagged);
  EXPECT_NEAR(slow.rows[0].order, 1.0, 1e-12);
  const auto fast = compare_runs(report(32, 4e-2), report(64, 1e-2));
  EXPECT_FALSE(fast.rows[0].flagged);
  EXPECT_NEAR(fast.rows[0].order, 2.0, 1e-12);
  const auto round = compare_runs(report(32, 1e-15), report(64, 2e-15));
  EXPECT_FALSE(round.rows[0].flagged);
}

TEST(Cli, UsageErrorsExitTwo)
{
  EXPECT_EQ(shell(std::string(cli())), 2);
  EXPECT_EQ(shell(std::string(cli()) + " frobnicate"), 2);
  EXPECT_EQ(shell(std::string(cli()) + " verify --resolution"), 2);
  EXPECT_EQ(shell(std::string(cli()) + " verify --resolution 8 --output " + scratch("cli_res8").string()), 2);
  EXPECT_EQ(shell(std::string(cli()) + " --help"), 0);
}

TEST(Cli, FileKeysAreRejectedAndFlagsOverrideTheFile)
{
  const auto dir = scratch("cli_cfg");
  {
    std::ofstream(dir / "bad.cfg") << "[grid]\nresolution = 32\ncolour = red\n";
    std::ofstream(dir / "ok.cfg") << "[model]\nn = 3\n[grid]\nresolution = 99\n[verify]\nsuite = soliton\n";
  }
  EXPECT_EQ(shell(std::string(cli()) + " verify --config " + (dir / "bad.cfg").string()), 2);
  const fs::path out = dir / "out";
  EXPECT_EQ(shell(std::string(cli()) + " verify --config " + (dir / "ok.cfg").string() +
                  " --resolution 32 --dim 2 --output " + out.string()),
            0);
  const Json rep = read_json((out / "report.json").string());
  EXPECT_EQ(rep["config"]["grid"]["resolution"], 32);
  EXPECT_EQ(rep["config"]["model"]["n"], 2);
  EXPECT_EQ(rep["config"]["verify"]["suite"], Json::array({"soliton"}));
}

TEST(Cli, CompareExitCodes)
{
  const auto a = scratch("cli_cmp");
  run_quiet(verify_config(32, a, {"soliton"}));
  RunConfig s;
  s.command = Command::Spectrum;
  s.model.n = 1;
  s.spectrum.count = 2;
  s.resolution = 32;
  s.output_dir = (a / "spec").string();
  run_quiet(s);
  const std::string ra = (a / "report.json").string();
  EXPECT_EQ(shell(std::string(cli()) + " compare " + ra + " " + (a / "spec" / "report.json").string()), 2);
  EXPECT_EQ(shell(std::string(cli()) + " compare " + ra + " " + ra), 1);
  EXPECT_EQ(shell(std::string(cli()) + " compare " + ra + " /nonexistent.json"), 2);
}

TEST(ReportFormat, PlotCsvHeader)
{
  const auto dir = scratch("plot");
  write_plot_csv((dir / "p.csv").string(), {{5.0, 1.0, 2.0}});
  std::ifstream in(dir / "p.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "radius,I,bound");
}

TEST(ReportFormat, IdentityRecordFields)
{
  IdentityReport rep;
  rep.resolution = 64;
  rep.stencil_order = 4;
  rep.residuals = {{"claim1", 1e-3}};
  const Json j = to_json(rep, "rotation.");
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0]["identity_name"], "rotation.claim1");
  EXPECT_EQ(j[0]["residual"], 1e-3);
  EXPECT_EQ(j[0]["resolution"], 64);
  EXPECT_EQ(j[0]["stencil_order"], 4);
}
