#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "cli_util.hpp"
#include "fixture_util.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "annulus_spectra_cli_tests";
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// strips the trailing wall_ms column from every CSV line
std::string drop_last_column(const std::string& csv) {
  std::string out;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    const auto pos = line.rfind(',');
    out += line.substr(0, pos);
    out.push_back('\n');
  }
  return out;
}

} // namespace

TEST_CASE("radial subcommand emits a valid record", "[cli]") {
  const auto fx = load_fixture_json("oracle_values.json");
  const auto res = run_cmd(cli() + " radial --problem lambda --p 2 --n 2 --r1 0.5 --r2 1");
  REQUIRE(res.code == 0);
  const auto rec = nlohmann::json::parse(res.out);
  CHECK(rec.at("payload_type") == "radial");
  CHECK(rec.at("command") == "radial");
  CHECK(rec.at("tool_version") == "0.1.0");
  CHECK(rec.at("config_digest").get<std::string>().size() == 16);
  const double lam = rec.at("payload").at("eigenvalue").get<double>();
  CHECK(lam == Catch::Approx(oracle(fx, "lambda_n2_p2_r0.5_1")).epsilon(1e-6));
  CHECK(rec.at("payload").at("profile").at("r").size() > 64);
}

TEST_CASE("repeated runs yield byte-identical payloads", "[cli]") {
  const std::string cmd = cli() + " radial --p 2.5 --n 3 --kappa -0.5 --r1 0.4 --r2 1.3";
  const auto a = run_cmd(cmd);
  const auto b = run_cmd(cmd);
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(extract_payload(a.out) == extract_payload(b.out));
}

TEST_CASE("flag order does not change the digest or the payload", "[cli]") {
  const auto a = run_cmd(cli() + " radial --p 2 --n 2 --r1 0.5 --r2 1 --kappa 0");
  const auto b = run_cmd(cli() + " radial --kappa 0 --r2 1 --r1 0.5 --n 2 --p 2");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const auto ja = nlohmann::json::parse(a.out);
  const auto jb = nlohmann::json::parse(b.out);
  CHECK(ja.at("config_digest") == jb.at("config_digest"));
  CHECK(extract_payload(a.out) == extract_payload(b.out));
}

TEST_CASE("config files merge under flags and reject unknown keys", "[cli]") {
  const fs::path dir = scratch_dir();
  const fs::path cfg = dir / "radial.json";
  write_file(cfg, "{\"p\": 2, \"n\": 2, \"r1\": 0.5, \"r2\": 1}");
  const auto a = run_cmd(cli() + " radial --config " + cfg.string());
  const auto b = run_cmd(cli() + " radial --p 2 --n 2 --r1 0.5 --r2 1");
  REQUIRE(a.code == 0);
  CHECK(nlohmann::json::parse(a.out).at("config_digest") ==
        nlohmann::json::parse(b.out).at("config_digest"));

  // a flag overrides the file value
  write_file(cfg, "{\"p\": 2, \"n\": 2, \"r1\": 0.5, \"r2\": 7}");
  const auto c = run_cmd(cli() + " radial --config " + cfg.string() + " --r2 1");
  REQUIRE(c.code == 0);
  CHECK(nlohmann::json::parse(c.out).at("config_digest") ==
        nlohmann::json::parse(b.out).at("config_digest"));

  write_file(cfg, "{\"p\": 2, \"bogus_knob\": 1}");
  const auto d = run_cmd(cli() + " radial --config " + cfg.string());
  CHECK(d.code == 2);
  CHECK(d.out.find("bogus_knob") != std::string::npos);
}

TEST_CASE("invalid parameters exit with code 2 and a named key", "[cli]") {
  const auto a = run_cmd(cli() + " radial --p 0.9 --n 2 --r1 0.5 --r2 1");
  CHECK(a.code == 2);
  CHECK(a.out.find("p must exceed 1") != std::string::npos);

  const auto b = run_cmd(cli() + " radial --r1 1 --r2 0.5");
  CHECK(b.code == 2);

  const auto c = run_cmd(cli() + " verify no-such-target");
  CHECK(c.code == 2);

  const auto d = run_cmd(cli() + " grid --shape triangle:1");
  CHECK(d.code == 2);
  CHECK(d.out.find("triangle") != std::string::npos);
}

TEST_CASE("cache reruns serve identical payload bytes", "[cli]") {
  const fs::path dir = scratch_dir() / "cache";
  fs::remove_all(dir);
  const std::string cmd =
      cli() + " radial --p 2 --n 2 --r1 0.5 --r2 1 --cache-dir " + dir.string();
  const auto a = run_cmd(cmd);
  REQUIRE(a.code == 0);
  REQUIRE(fs::exists(dir));

  // exactly one cache entry, named by the digest
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(dir))
    entries.push_back(e.path());
  REQUIRE(entries.size() == 1);
  const auto rec = nlohmann::json::parse(a.out);
  CHECK(entries[0].filename().string() ==
        rec.at("config_digest").get<std::string>() + ".json");

  const auto b = run_cmd(cmd);
  REQUIRE(b.code == 0);
  CHECK(extract_payload(a.out) == extract_payload(b.out));

  // the cache short-circuits compute: a planted payload is served verbatim
  write_file(entries[0], "{\"planted\":true}");
  const auto c = run_cmd(cmd);
  REQUIRE(c.code == 0);
  CHECK(extract_payload(c.out) == "{\"planted\":true}");

  // the environment variable names the same cache
  fs::remove_all(dir);
  const auto d = run_cmd("ANNULUS_SPECTRA_CACHE=" + dir.string() + " " + cli() +
                         " radial --p 2 --n 2 --r1 0.5 --r2 1");
  REQUIRE(d.code == 0);
  CHECK(fs::exists(dir));
}

TEST_CASE("sweep writes one CSV row per cartesian point in input order", "[cli]") {
  const auto res = run_cmd(cli() +
                           " sweep --problem lambda --r1 0.5 --r2 1"
                           " --vary kappa=-1,0,0.5 --vary p=1.5,2,3");
  REQUIRE(res.code == 0);
  std::istringstream in(res.out);
  std::string line;
  std::getline(in, line);
  CHECK(line == "problem,p,n,kappa,r1,r2,eigenvalue,residual,wall_ms");
  std::vector<std::string> rows;
  while (std::getline(in, line))
    if (!line.empty())
      rows.push_back(line);
  REQUIRE(rows.size() == 9);
  // first axis (kappa) is outermost; second axis (p) cycles fastest
  CHECK(rows[0].rfind("lambda,1.5,2,-1,", 0) == 0);
  CHECK(rows[1].rfind("lambda,2,2,-1,", 0) == 0);
  CHECK(rows[2].rfind("lambda,3,2,-1,", 0) == 0);
  CHECK(rows[3].rfind("lambda,1.5,2,0,", 0) == 0);
  CHECK(rows[8].rfind("lambda,3,2,0.5,", 0) == 0);

  // parallel execution keeps rows and values identical apart from timing
  const auto par = run_cmd(cli() +
                           " sweep --problem lambda --r1 0.5 --r2 1"
                           " --vary kappa=-1,0,0.5 --vary p=1.5,2,3 --jobs 3");
  REQUIRE(par.code == 0);
  CHECK(drop_last_column(par.out) == drop_last_column(res.out));
}

TEST_CASE("grid solves write records and optional field artifacts", "[cli]") {
  const auto fx = load_fixture_json("oracle_values.json");
  const fs::path dir = scratch_dir();
  const fs::path fcsv = dir / "field.csv";
  const fs::path mask = dir / "mask.pgm";
  const auto res = run_cmd(cli() + " grid --shape disk:1 --h 0.0625 --field-csv " +
                           fcsv.string() + " --mask " + mask.string());
  REQUIRE(res.code == 0);
  const auto rec = nlohmann::json::parse(res.out);
  CHECK(rec.at("payload_type") == "planar");
  const double lam = rec.at("payload").at("eigenvalue").get<double>();
  CHECK(lam == Catch::Approx(oracle(fx, "dirichlet_disk_p2_R1")).epsilon(0.08));

  const std::string field = read_file(fcsv);
  CHECK(field.rfind("x,y,value\n", 0) == 0);
  const std::string pgm = read_file(mask);
  CHECK(pgm.rfind("P2\n", 0) == 0);
}

TEST_CASE("rearrange emits profile, masses, and passing checks", "[cli]") {
  const auto res =
      run_cmd(cli() + " rearrange --shape annulus:1,0.3 --offset 0 --h 0.03125");
  REQUIRE(res.code == 0);
  const auto rec = nlohmann::json::parse(res.out);
  CHECK(rec.at("payload_type") == "rearrangement");
  const auto& pl = rec.at("payload");
  CHECK(pl.at("all_pass") == true);
  CHECK(pl.at("profile").at("r").size() > 10);
  CHECK(pl.at("checks").size() == 4);
}

TEST_CASE("rearrange reports the failed energy check on an offset hole", "[cli]") {
  // The record is still written; the nonzero exit flags the failed comparison.
  const auto res =
      run_cmd(cli() + " rearrange --shape annulus:1,0.3 --offset 0.25 --h 0.03125");
  REQUIRE(res.code == 1);
  const auto rec = nlohmann::json::parse(res.out);
  const auto& pl = rec.at("payload");
  CHECK(pl.at("all_pass") == false);
  REQUIRE(pl.at("checks").size() == 4);
  int failed = 0;
  for (const auto& c : pl.at("checks"))
    if (c.at("pass") == false)
      ++failed;
  CHECK(failed == 1);
}

TEST_CASE("verify curvature passes and reports comparisons", "[cli]") {
  const auto res = run_cmd(cli() + " verify curvature --p 2 --n 2 --r1 0.5 --r2 1");
  REQUIRE(res.code == 0);
  const auto rec = nlohmann::json::parse(res.out);
  CHECK(rec.at("payload_type") == "comparison_list");
  CHECK(rec.at("payload").at("all_pass") == true);
  CHECK(rec.at("payload").at("checks").size() == 8);
}

TEST_CASE("plot flattens fit and radial records and rejects mixtures", "[cli]") {
  const fs::path dir = scratch_dir();
  const fs::path fit = dir / "fit_record.json";
  write_file(fit,
             "{\"config_digest\":\"x\",\"tool_version\":\"0.1.0\","
             "\"timestamp\":\"t\",\"command\":\"c\",\"payload_type\":\"fit\","
             "\"payload\":{\"slope\":2,\"intercept\":0,\"r_squared\":1,"
             "\"xs\":[1,2],\"ys\":[1,4]}}");
  const auto a = run_cmd(cli() + " plot " + fit.string());
  REQUIRE(a.code == 0);
  CHECK(a.out == "x,y,fit_y\n1,1,1\n2,4,4\n");

  const fs::path rad = dir / "radial_record.json";
  const auto r = run_cmd(cli() + " radial --p 2 --n 2 --r1 0.5 --r2 1 --out " + rad.string());
  REQUIRE(r.code == 0);
  const auto b = run_cmd(cli() + " plot " + rad.string());
  REQUIRE(b.code == 0);
  CHECK(b.out.rfind("r,u,flux\n", 0) == 0);

  const auto c = run_cmd(cli() + " plot " + fit.string() + " " + rad.string());
  CHECK(c.code == 2);

  const auto d = run_cmd(cli() + " plot");
  REQUIRE(d.code == 0);
  CHECK(d.out == "x,y,fit_y\n");

  // a record solved with --no-profile has nothing to flatten
  const fs::path bare = dir / "bare_record.json";
  const auto nr = run_cmd(cli() + " radial --p 2 --n 2 --r1 0.5 --r2 1 --no-profile --out " +
                          bare.string());
  REQUIRE(nr.code == 0);
  const auto np = run_cmd(cli() + " plot " + bare.string());
  CHECK(np.code == 2);
  CHECK(np.out.find("no profile arrays") != std::string::npos);

  // named fit extraction from a verify record
  const fs::path ver = dir / "verify_record.json";
  const auto v = run_cmd(cli() + " verify mu-decay --out " + ver.string());
  REQUIRE(v.code == 0);
  const auto e = run_cmd(cli() + " plot --fit mu_vs_eps " + ver.string());
  REQUIRE(e.code == 0);
  CHECK(e.out.rfind("x,y,fit_y\n", 0) == 0);
  CHECK(e.out.find("0.01,") != std::string::npos);
}

TEST_CASE("golden fixtures stay stable", "[cli]") {
  const fs::path golden = fs::path(FIXTURES_DIR) / "golden";

  const auto a = run_cmd(cli() + " radial --p 2 --n 2 --r1 0.5 --r2 1 --no-profile");
  REQUIRE(a.code == 0);
  CHECK(extract_payload(a.out) + "\n" == read_file(golden / "radial_payload.json"));

  const auto b = run_cmd(cli() +
                         " sweep --problem mu --r1 0.5 --r2 1"
                         " --vary p=1.5,2 --vary n=2,3");
  REQUIRE(b.code == 0);
  CHECK(drop_last_column(b.out) == drop_last_column(read_file(golden / "sweep.csv")));

  const fs::path dir = scratch_dir();
  const fs::path ver = dir / "mu_decay_record.json";
  const auto v = run_cmd(cli() + " verify mu-decay --out " + ver.string());
  REQUIRE(v.code == 0);
  const auto c = run_cmd(cli() + " plot --fit mu_vs_eps " + ver.string());
  REQUIRE(c.code == 0);
  CHECK(c.out == read_file(golden / "plot_fit.csv"));
}

TEST_CASE("ball subcommand reproduces the hemisphere eigenvalue", "[cli]") {
  const auto res = run_cmd(cli() + " ball --p 2 --n 2 --kappa 1 --r 1.5707963267948966");
  REQUIRE(res.code == 0);
  const auto rec = nlohmann::json::parse(res.out);
  CHECK(rec.at("payload").at("eigenvalue").get<double>() == Catch::Approx(2.0).epsilon(1e-6));
}
