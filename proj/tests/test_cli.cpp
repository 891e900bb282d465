#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() / "qclab_cli_test";
  fs::create_directories(dir);
  const fs::path out = dir / ("out" + std::to_string(counter) + ".txt");
  const fs::path err = dir / ("err" + std::to_string(counter) + ".txt");
  ++counter;
  const std::string cmd = env + (env.empty() ? "" : " ") + std::string(QCLAB_BIN) + " " + args +
                          " >" + out.string() + " 2>" + err.string();
  const int rc = std::system(cmd.c_str());
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  return {WEXITSTATUS(rc), slurp(out), slurp(err)};
}

std::string slurp_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "qclab_cli_scratch";
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream os(p);
  os << content;
}

}  // namespace

TEST_CASE("tau subcommand") {
  auto ok = run_cli("tau --delta 0.01 --d 500");
  REQUIRE(ok.exit_code == 0);
  REQUIRE(ok.out.find("sqrt(d)*tau") != std::string::npos);

  auto hemisphere = run_cli("tau --delta 0.5 --d 100");
  REQUIRE(hemisphere.exit_code == 0);
  REQUIRE(hemisphere.out.find("tau = 0\n") != std::string::npos);

  auto bad = run_cli("tau --delta 1.5 --d 100");
  REQUIRE(bad.exit_code == 2);

  auto bad_model = run_cli("tau --delta 0.1 --d 100 --model fancy");
  REQUIRE(bad_model.exit_code == 2);
}

TEST_CASE("boundary-dump determinism and content") {
  const auto dir = scratch_dir();
  const auto a = dir / "bd_a.csv";
  const auto b = dir / "bd_b.csv";
  REQUIRE(run_cli("boundary-dump --m 20 --z 2 --seed 5 --resolution 40 --output " + a.string())
              .exit_code == 0);
  REQUIRE(run_cli("boundary-dump --m 20 --z 2 --seed 5 --resolution 40 --output " + b.string())
              .exit_code == 0);
  REQUIRE(slurp_file(a) == slurp_file(b));

  std::ifstream is(a);
  std::string line;
  std::getline(is, line);
  REQUIRE(line == "x,y,label,in_error_set");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    const auto last_comma = line.rfind(',');
    const std::string err = line.substr(last_comma + 1);
    REQUIRE((err == "0" || err == "1"));
    const auto prev_comma = line.rfind(',', last_comma - 1);
    const std::string label = line.substr(prev_comma + 1, last_comma - prev_comma - 1);
    REQUIRE((label == "-1" || label == "1"));
  }
  REQUIRE(rows == 40 * 40);

  auto low_res = run_cli("boundary-dump --m 20 --z 2 --seed 5 --resolution 5 --output " +
                         (dir / "bd_c.csv").string());
  REQUIRE(low_res.exit_code == 2);
}

TEST_CASE("run: config validation") {
  const auto dir = scratch_dir();
  SECTION("unknown key rejected with position") {
    const auto cfg = dir / "bad_key.ini";
    write_file(cfg, "kind = tau\nseed = 1\noutput = " + (dir / "o1").string() +
                        "\n[tau]\ndelta = 0.01\nd = 100\nbogus = 3\n");
    auto r = run_cli("run " + cfg.string());
    REQUIRE(r.exit_code == 2);
    REQUIRE(r.err.find("line 7") != std::string::npos);
    REQUIRE(r.err.find("bogus") != std::string::npos);
  }
  SECTION("malformed line rejected") {
    const auto cfg = dir / "bad_line.ini";
    write_file(cfg, "kind = tau\nseed = 1\noutput = x\n[tau]\ndelta 0.01\n");
    auto r = run_cli("run " + cfg.string());
    REQUIRE(r.exit_code == 2);
    REQUIRE(r.err.find("line 5") != std::string::npos);
  }
  SECTION("missing required key rejected") {
    const auto cfg = dir / "missing.ini";
    write_file(cfg, "kind = cap-attack\nseed = 1\noutput = x\n[cap-attack]\nd = 50\n");
    auto r = run_cli("run " + cfg.string());
    REQUIRE(r.exit_code == 2);
    REQUIRE(r.err.find("'s'") != std::string::npos);
  }
  SECTION("bad numeric value rejected") {
    const auto cfg = dir / "bad_num.ini";
    write_file(cfg, "kind = tau\nseed = 1\noutput = x\n[tau]\ndelta = banana\nd = 100\n");
    auto r = run_cli("run " + cfg.string());
    REQUIRE(r.exit_code == 2);
    REQUIRE(r.err.find("banana") != std::string::npos);
  }
  SECTION("missing file") {
    auto r = run_cli("run /nonexistent/path.ini");
    REQUIRE(r.exit_code == 2);
  }
}

TEST_CASE("run: tau kind produces csv, json echo, and meta sidecar") {
  const auto dir = scratch_dir();
  const auto out = (dir / "tau_run").string();
  const auto cfg = dir / "tau.ini";
  write_file(cfg, "kind = tau\nseed = 7\noutput = " + out +
                      "\n[tau]\ndelta = 0.01\nd = 500\nmodel = exact\n");
  auto r = run_cli("run " + cfg.string());
  REQUIRE(r.exit_code == 0);
  const std::string csv = slurp_file(out + ".csv");
  REQUIRE(csv.find("model,delta,d,tau,sqrt_d_tau,roundtrip_residual") == 0);
  const std::string js = slurp_file(out + ".json");
  REQUIRE(js.find("\"kind\": \"tau\"") != std::string::npos);
  REQUIRE(js.find("\"delta\": \"0.01\"") != std::string::npos);
  REQUIRE(js.find("\"model\": \"exact\"") != std::string::npos);
  REQUIRE(fs::exists(out + ".meta.json"));
}

TEST_CASE("run: replay determinism across worker counts") {
  const auto dir = scratch_dir();
  const auto out_a = (dir / "qc_a").string();
  const auto out_b = (dir / "qc_b").string();
  auto make_cfg = [&](const std::string& out) {
    return "kind = qc-curve\nseed = 13\noutput = " + out +
           "\nworkers = 1\n[qc-curve]\nsetup = cap\nd = 30\ndelta = 0.05\nbudgets = 10,40\n"
           "trials = 4\nn_mc = 300\n";
  };
  const auto cfg_a = dir / "qc_a.ini";
  const auto cfg_b = dir / "qc_b.ini";
  write_file(cfg_a, make_cfg(out_a));
  write_file(cfg_b, make_cfg(out_b));
  REQUIRE(run_cli("run " + cfg_a.string(), "QCLAB_WORKERS=1").exit_code == 0);
  REQUIRE(run_cli("run " + cfg_b.string(), "QCLAB_WORKERS=2").exit_code == 0);
  REQUIRE(slurp_file(out_a + ".csv") == slurp_file(out_b + ".csv"));
  // json differs only in the echoed output path; compare summaries
  const std::string ja = slurp_file(out_a + ".json");
  const std::string jb = slurp_file(out_b + ".json");
  const auto summary_of = [](const std::string& s) { return s.substr(s.find("\"summary\"")); };
  REQUIRE(summary_of(ja) == summary_of(jb));
}

TEST_CASE("run: cap-attack transcript export") {
  const auto dir = scratch_dir();
  const auto out = (dir / "cap_small").string();
  const auto cfg = dir / "cap_small.ini";
  write_file(cfg, "kind = cap-attack\nseed = 3\noutput = " + out +
                      "\n[cap-attack]\nd = 30\ndelta = 0.05\ns = 40\ntrials = 3\nn_mc = 300\n"
                      "transcript = 1\n");
  auto r = run_cli("run " + cfg.string());
  REQUIRE(r.exit_code == 0);
  const std::string tr = slurp_file(out + ".transcript.jsonl");
  REQUIRE(tr.find("{\"q\": [") == 0);
  REQUIRE(std::count(tr.begin(), tr.end(), '\n') == 80);  // 2s queries
}
