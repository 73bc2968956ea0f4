#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "adf/protocol.hpp"
#include "cli.hpp"

namespace adf {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "adf");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("adf_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  void make_trace(int duration = 4) {
    ASSERT_EQ(run({"gen-topology", "--seed", "2", "--tiers", "4,40,300", "--out", p("topo.txt")}).code, 0);
    ASSERT_EQ(run({"gen-attack", "--topology", p("topo.txt"), "--ddos", "200", "--legit", "80", "--duration",
                   std::to_string(duration), "--seed", "7", "--out", p("trace.txt")})
                  .code,
              0);
  }

  void write_rules(int n, NodeId node) {
    std::ofstream out(p("rules.txt"));
    for (int i = 1; i <= n; ++i) out << i << ",10.0." << i << ".0/24,TCP,SYN,0.0.0.0/0," << node << ",0,600\n";
  }

  fs::path dir_;
};

TEST_F(Cli, GenerateWritesReportsDeterministically) {
  make_trace();
  const std::vector<std::string> args{"generate", "--trace", p("trace.txt"), "--problem", "min-rules", "-D",
                                      "100%", "-L", "0"};
  auto a = args, b = args;
  a.insert(a.end(), {"--out-dir", p("a")});
  b.insert(b.end(), {"--out-dir", p("b")});
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  for (const char* f : {"rules.txt", "batches.csv"}) {
    EXPECT_FALSE(slurp(dir_ / "a" / f).empty()) << f;
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  const auto rows = lines(slurp(dir_ / "a" / "batches.csv"));
  EXPECT_EQ(rows.size(), 5u);
  EXPECT_NE(slurp(dir_ / "a" / "manifest.json").find("\"command\": \"generate\""), std::string::npos);
  EXPECT_EQ(lines(slurp(dir_ / "a" / "timing.csv")).front(), "batch,leaves,solve_ms");
}

TEST_F(Cli, GenerateCoverageAndZeroRules) {
  make_trace(2);
  ASSERT_EQ(run({"generate", "--trace", p("trace.txt"), "--problem", "max-coverage", "-L", "inf", "-M", "inf",
                 "--out-dir", p("mc")})
                .code,
            0);
  for (const auto& row : lines(slurp(dir_ / "mc" / "batches.csv"))) {
    if (row.rfind("batch", 0) == 0) continue;
    std::vector<double> v;
    std::istringstream in(row);
    for (std::string cell; std::getline(in, cell, ',');) v.push_back(std::stod(cell));
    EXPECT_NEAR(v[6], v[3] - v[5], 1e-6) << row;
  }
  ASSERT_EQ(run({"generate", "--trace", p("trace.txt"), "--problem", "min-rules", "-D", "0", "-L", "5%",
                 "--out-dir", p("zero")})
                .code,
            0);
  for (const auto& row : lines(slurp(dir_ / "zero" / "batches.csv"))) {
    if (row.rfind("batch", 0) == 0) continue;
    EXPECT_EQ(row.substr(row.rfind(',', row.size() - 3) + 1), "0,1") << row;
  }
  EXPECT_TRUE(slurp(dir_ / "zero" / "rules.txt").empty());
}

TEST_F(Cli, ConfigErrorsAreReported) {
  make_trace(1);
  Result r = run({"generate", "--trace", p("trace.txt"), "--problem", "max-coverage", "-L", "0"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("--rule-budget"), std::string::npos);
  r = run({"generate", "--trace", p("missing.txt"), "--problem", "min-rules", "-D", "1", "-L", "1"});
  EXPECT_NE(r.code, 0);
  r = run({"generate", "--trace", p("trace.txt"), "--problem", "min-rules", "-D", "lots", "-L", "1"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("invalid bound"), std::string::npos);
  r = run({"place", "--rules", p("trace.txt"), "--limit", "3"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(run({"frobnicate"}).code, 0);
}

TEST_F(Cli, SimulateBaselineAndFiltering) {
  make_trace(6);
  ASSERT_EQ(run({"simulate", "--trace", p("trace.txt"), "--baseline", "--out-dir", p("base")}).code, 0);
  for (const auto& row : lines(slurp(dir_ / "base" / "seconds.csv"))) {
    if (row.rfind("second", 0) == 0) continue;
    std::istringstream in(row);
    std::vector<long> v;
    for (std::string cell; std::getline(in, cell, ',');) v.push_back(std::stol(cell));
    EXPECT_EQ(v[3], 0);
    EXPECT_EQ(v[6], v[1]);
  }
  ASSERT_EQ(run({"simulate", "--trace", p("trace.txt"), "--problem", "min-rules", "-D", "100%", "-L", "0",
                 "--topology", p("topo.txt"), "--profile", "full-participation", "--node-limit", "100", "--out-dir",
                 p("sim")})
                .code,
            0);
  const auto rows = lines(slurp(dir_ / "sim" / "seconds.csv"));
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(rows[0],
            "second,arrivals_flows,ddos_arrivals_flows,filtered_flows,ddos_filtered_flows,legit_filtered_flows,"
            "reached_flows");
  for (std::size_t i = 2; i < rows.size(); ++i) {
    std::istringstream in(rows[i]);
    std::vector<long> v;
    for (std::string cell; std::getline(in, cell, ',');) v.push_back(std::stol(cell));
    EXPECT_EQ(v[4], v[2]) << rows[i];
    EXPECT_EQ(v[5], 0) << rows[i];
    EXPECT_EQ(v[1], v[3] + v[6]) << rows[i];
  }
  EXPECT_EQ(lines(slurp(dir_ / "sim" / "distribution.csv")).front(), "rules,cumulative_fraction");
  EXPECT_EQ(lines(slurp(dir_ / "sim" / "placement.csv")).front(), "batch,rules,placed,success_rate");
}

TEST_F(Cli, PlaceWithProfile) {
  make_trace(1);
  ASSERT_EQ(run({"generate", "--trace", p("trace.txt"), "--problem", "min-rules", "-D", "100%", "-L", "0",
                 "--out-dir", p("gen")})
                .code,
            0);
  const Result r = run({"place", "--rules", p("gen/rules.txt"), "--limit", "1", "--topology", p("topo.txt"),
                        "--profile", "victim-only", "--out-dir", p("pl")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("placed=1 "), std::string::npos) << r.out;
  const auto rows = lines(slurp(dir_ / "pl" / "placement.csv"));
  EXPECT_EQ(rows.front(), "rule_id,node");
  EXPECT_EQ(rows.back().rfind("# placed=1", 0), 0u);
}

TEST_F(Cli, GeneratorsAreDeterministic) {
  ASSERT_EQ(run({"gen-topology", "--seed", "5", "--tiers", "3,20,100", "--out", p("t1.txt")}).code, 0);
  ASSERT_EQ(run({"gen-topology", "--seed", "5", "--tiers", "3,20,100", "--out", p("t2.txt")}).code, 0);
  EXPECT_EQ(slurp(dir_ / "t1.txt"), slurp(dir_ / "t2.txt"));
  {
    std::ofstream cfg(p("attack.cfg"));
    cfg << "ddos_sources=50\nlegit_sources=10\nduration=2\nspoof_fraction=0.2\nseed=4\n";
  }
  ASSERT_EQ(run({"gen-attack", "--topology", p("t1.txt"), "--config", p("attack.cfg"), "--out", p("a1.txt")}).code, 0);
  ASSERT_EQ(run({"gen-attack", "--topology", p("t1.txt"), "--config", p("attack.cfg"), "--out", p("a2.txt")}).code, 0);
  EXPECT_EQ(slurp(dir_ / "a1.txt"), slurp(dir_ / "a2.txt"));
  EXPECT_EQ(lines(slurp(dir_ / "a1.txt")).size(), 2u + 2 * 60);
  ASSERT_EQ(run({"gen-attack", "--topology", p("t1.txt"), "--config", p("attack.cfg"), "--ddos", "5", "--out",
                 p("a3.txt")})
                .code,
            0);
  EXPECT_EQ(lines(slurp(dir_ / "a3.txt")).size(), 2u + 2 * 15);
}

TEST_F(Cli, SubmitAcksPerRule) {
  write_rules(10, 7);
  RuleTable roomy(10);
  NodeServer a(roomy, 0);
  Result r = run({"submit", "--rules", p("rules.txt"), "--node", "7=127.0.0.1:" + std::to_string(a.port())});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 11u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_NE(rows[i].find(",7,0,ok,"), std::string::npos) << rows[i];

  RuleTable tight(5);
  NodeServer b(tight, 0);
  r = run({"submit", "--rules", p("rules.txt"), "--node", "7=127.0.0.1:" + std::to_string(b.port()), "--out",
           p("acks.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("accepted=5 failed=5"), std::string::npos);
  rows = lines(slurp(dir_ / "acks.csv"));
  int ok = 0, full = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ok += rows[i].find(",0,ok,") != std::string::npos;
    full += rows[i].find(",3,all-failed,") != std::string::npos;
  }
  EXPECT_EQ(ok, 5);
  EXPECT_EQ(full, 5);
  a.stop();
  b.stop();

  std::uint16_t dead = 0;
  {
    RuleTable t(1);
    NodeServer s(t, 0);
    dead = s.port();
  }
  r = run({"submit", "--rules", p("rules.txt"), "--node", "7=127.0.0.1:" + std::to_string(dead), "--timeout", "0.3"});
  ASSERT_EQ(r.code, 0);
  rows = lines(r.out);
  ASSERT_EQ(rows.size(), 11u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_NE(rows[i].find("all-failed"), std::string::npos);
}

TEST_F(Cli, SubmitUsesPlacementOrder) {
  write_rules(2, 7);
  {
    std::ofstream out(p("rules.txt"));
    out << "1,10.0.1.0/24,TCP,SYN,0.0.0.0/0,7|8,0,600\n";
  }
  {
    std::ofstream out(p("placement.csv"));
    out << "rule_id,node\n1,8\n# placed=1 failed=0 success_rate=1\n";
  }
  RuleTable t7(5), t8(5);
  NodeServer s7(t7, 0), s8(t8, 0);
  const Result r = run({"submit", "--rules", p("rules.txt"), "--placement", p("placement.csv"), "--node",
                        "7=127.0.0.1:" + std::to_string(s7.port()), "--node",
                        "8=127.0.0.1:" + std::to_string(s8.port())});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("1,8,0,ok,1,"), std::string::npos) << r.out;
  EXPECT_EQ(t8.size(), 1u);
  EXPECT_EQ(t7.size(), 0u);
}

TEST_F(Cli, ServeNodeInstallsAndExports) {
  std::uint16_t port = 0;
  {
    RuleTable t(1);
    NodeServer s(t, 0);
    port = s.port();
  }
  std::ostringstream serve_out, serve_err;
  std::string port_s = std::to_string(port), acl = p("acl.txt");
  std::thread server([&] {
    std::vector<std::string> args{"adf", "serve-node", "--port", port_s, "--capacity", "3", "--duration", "1.5",
                                  "--export-acl", acl};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    cli::run(static_cast<int>(argv.size()), argv.data(), serve_out, serve_err);
  });
  RuleAck ack;
  bool sent = false;
  for (int attempt = 0; attempt < 20 && !sent; ++attempt) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    try {
      TcpEndpoint ep(1, "127.0.0.1", port, std::chrono::milliseconds(500), 0);
      RuleSubmission m;
      m.rule_id = 77;
      m.source = SourceSpec::parse("10.9.0.0/16");
      m.start_time = 0;
      m.end_time = unix_now() + 600;
      ack = ep.submit(m);
      sent = true;
    } catch (const TransportError&) {
    }
  }
  server.join();
  ASSERT_TRUE(sent);
  EXPECT_EQ(ack.code, AckCode::Ok);
  EXPECT_NE(serve_out.str().find("stopped rules=1"), std::string::npos) << serve_out.str();
  EXPECT_NE(slurp(acl).find("src 10.9.0.0/16"), std::string::npos);
}

}  // namespace
}  // namespace adf
