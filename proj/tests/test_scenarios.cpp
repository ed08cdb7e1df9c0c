#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cyberlogic/config.hpp"
#include "cyberlogic/error.hpp"
#include "cyberlogic/scenarios.hpp"

using namespace cyberlogic;
namespace fs = std::filesystem;

namespace {

std::string join(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Compares against tests/golden/<file>; CYBERLOGIC_UPDATE_GOLDEN=1 rewrites the file instead.
void golden(const std::string& file, const std::string& actual) {
  fs::path p = fs::path(CYBERLOGIC_GOLDEN_DIR) / file;
  if (std::getenv("CYBERLOGIC_UPDATE_GOLDEN")) {
    std::ofstream(p, std::ios::binary) << actual;
    return;
  }
  REQUIRE_MESSAGE(fs::exists(p), "missing golden file " << p);
  std::string expected = slurp(p);
  CHECK_MESSAGE(expected == actual, "golden mismatch for " << file);
}

std::vector<std::string> sent_queries(const ScenarioResult& r) { return transcript_queries(r.transcript); }

}  // namespace

TEST_SUITE("scenarios") {
  TEST_CASE("hospital evidence spine") {
    ScenarioResult r = run_scenario("hospital");
    REQUIRE(r.ok);
    REQUIRE(r.certificate);
    CHECK(render_spine(r.certificate->root) ==
          "a2(Alice)(Peter)(a3(Alice)(Peter)(B)(a4(B)(B)(C)(_)(inr(a1))((b2,c1)))(b3))");
    CHECK(r.elapsed_ms < 1000);
  }

  TEST_CASE("delegation through HMO and CA") {
    ScenarioResult r = run_scenario("delegation");
    REQUIRE(r.ok);
    REQUIRE(r.queries.size() == 2);
    std::string hmo = render_spine(r.queries[0].result.answers.at(0).evidence);
    CHECK(hmo.rfind("hmo1(", 0) == 0);
    std::string trust = render_spine(r.certificate->root);
    CHECK(trust.rfind("auth(B)(ca1", 0) == 0);
    CHECK(trust.find("hmo1") != std::string::npos);

    ScenarioOptions cut;
    cut.without_ca1 = true;
    ScenarioResult without = run_scenario("delegation", cut);
    CHECK_FALSE(without.ok);
    CHECK(without.queries[0].result.ok());
    CHECK_FALSE(without.queries[1].result.ok());
  }

  TEST_CASE("revocation window") {
    for (long long use : {1LL, 7LL, 9LL, 10LL, 12LL}) {
      ScenarioOptions o;
      o.revoke_at = 10;
      o.use_at = use;
      ScenarioResult r = run_scenario("revocation", o);
      CAPTURE(use);
      CHECK(r.ok == (use < 10));
      if (r.ok) CHECK(r.certificate);
    }
  }

  TEST_CASE("timed queries at clock 5") {
    ScenarioResult r = run_scenario("timed");
    REQUIRE(r.ok);
    std::map<std::string, bool> got;
    for (const auto& q : r.queries) got[q.label] = q.result.ok();
    CHECK(got.at("past3"));
    CHECK_FALSE(got.at("future3"));
    CHECK(got.at("future9"));
    CHECK(got.at("curr5"));
    // future(9) is justified by a receipt signed by the time source.
    const Evidence& e = r.certificate->root;
    std::function<const Evidence*(const Evidence&)> hole = [&](const Evidence& x) -> const Evidence* {
      if (x.is(Evidence::Kind::TheoryHole)) return &x;
      for (const auto& s : x.subs)
        if (auto* h = hole(s)) return h;
      return nullptr;
    };
    const Evidence* h = hole(e);
    REQUIRE(h);
    REQUIRE(h->leaf);
    CHECK(h->leaf->principal.name == "T");
  }

  TEST_CASE("needham-schroeder message order") {
    ScenarioResult r = run_scenario("ns");
    REQUIRE(r.ok);
    auto qs = sent_queries(r);
    std::vector<std::string> preds;
    for (const auto& q : qs)
      for (const char* m : {"msg1", "msg2", "msg3"})
        if (q.find(m) != std::string::npos) preds.push_back(m);
    CHECK(preds == std::vector<std::string>{"msg1", "msg2", "msg3"});
    CHECK(r.notes.at("order") == "msg1,msg2,msg3");
    CHECK(r.elapsed_ms < 1000);

    ScenarioOptions two;
    two.rounds = 2;
    ScenarioResult r2 = run_scenario("ns", two);
    REQUIRE(r2.ok);
    CHECK(r2.notes.at("distinct_nonces") == "4/4");
  }

  TEST_CASE("every scenario is deterministic under its seed") {
    for (const auto& name : scenario_names()) {
      CAPTURE(name);
      for (std::uint64_t seed : {1ULL, 99ULL}) {
        ScenarioOptions o;
        o.seed = seed;
        ScenarioResult a = run_scenario(name, o);
        ScenarioResult b = run_scenario(name, o);
        CHECK(a.transcript == b.transcript);
        REQUIRE(a.certificate.has_value() == b.certificate.has_value());
        if (a.certificate) CHECK(encode_certificate(*a.certificate) == encode_certificate(*b.certificate));
      }
    }
  }

  TEST_CASE("golden transcripts and certificates") {
    for (const auto& name : scenario_names()) {
      CAPTURE(name);
      ScenarioResult r = run_scenario(name);
      golden(name + ".transcript", join(r.transcript));
      if (r.certificate) golden(name + ".cert.txt", certificate_to_text(*r.certificate));
    }
  }

  TEST_CASE("scenario directories on disk behave like the embedded ones") {
    fs::path dir = fs::path(CYBERLOGIC_SCENARIO_DIR) / "hospital";
    ScenarioResult disk = run_scenario_config(dir.string());
    ScenarioResult embedded = run_scenario("hospital");
    CHECK(disk.ok);
    CHECK(disk.transcript == embedded.transcript);
  }

  TEST_CASE("policy sets write and reload") {
    PolicySet ps = PolicySet::from_sources(scenario_files("delegation"));
    fs::path dir = fs::temp_directory_path() / "cyberlogic-test-policies";
    fs::remove_all(dir);
    ps.write(dir.string());
    PolicySet back = load_policy_dir(dir.string());
    CHECK(back.policies.size() == ps.policies.size());
    for (const auto& [owner, p] : ps.policies) CHECK(back.policies.at(owner).digest == p.digest);
    REQUIRE(back.common);
    CHECK(back.common->digest == ps.common->digest);
    fs::remove_all(dir);
    CHECK_THROWS_AS(load_policy_dir(dir.string()), Error);
  }

  TEST_CASE("unknown scenarios") { CHECK_THROWS_AS(run_scenario("nosuch"), Error); }
}

TEST_SUITE("tamper") {
  TEST_CASE("bit flips at every mutation site are rejected") {
    for (const char* name : {"hospital", "ns"}) {
      std::string n = name;
      CAPTURE(n);
      ScenarioResult r = run_scenario(name);
      REQUIRE(r.certificate);
      auto spec = scenario_spec(name, {});
      Deployment d(spec.first);
      CheckContext ctx = d.local_context();
      REQUIRE(check_certificate(ctx, *r.certificate).ok);
      auto sites = mutation_sites(r.certificate->root);
      CHECK(sites.size() >= 5);
      std::size_t tried = 0;
      for (const auto& site : sites) {
        for (std::size_t bit = 0; bit < site.bits; bit += std::max<std::size_t>(1, site.bits / 16)) {
          Certificate c = *r.certificate;
          REQUIRE(mutate(c.root, site, bit));
          CheckResult res = check_certificate(ctx, c);
          CAPTURE(site.path);
          CAPTURE(bit);
          CHECK_FALSE(res.ok);
          CHECK_FALSE(res.path.empty());
          // The seal alone would catch this; the evidence must be rejected on its own.
          CheckContext bare = ctx;
          bare.store = &c.store;
          CheckResult ev = check(bare, {}, c.root, c.root_formula);
          CHECK_FALSE(ev.ok);
          CHECK_FALSE(ev.path.empty());
          ++tried;
        }
      }
      CHECK(tried > sites.size());
    }
  }

  TEST_CASE("tamper specs") {
    ScenarioResult r = run_scenario("hospital");
    Certificate c = *r.certificate;
    CHECK(tamper(c, "$@3"));
    CHECK_FALSE(tamper(c, "/9/9/9"));
    Bytes b{0, 0};
    flip_bit(b, 9);
    CHECK(b == Bytes{0, 2});
  }
}

TEST_SUITE("config") {
  TEST_CASE("tables, arrays and values") {
    Config c = parse_config(R"(# top
name = "x"   # trailing
seed = 42
ratio = 0.5
on = true
nodes = ["A", "B"]
[sim]
timeout_ms = 100
[[fault]]
kind = "drop"
type = "QUERY"
[[fault]]
kind = "delay"
delay_ms = 5
)");
    CHECK(c.root.str("name") == "x");
    CHECK(c.root.integer("seed") == 42);
    CHECK(c.root.number("ratio") == doctest::Approx(0.5));
    CHECK(c.root.boolean("on"));
    CHECK(c.root.strings("nodes") == std::vector<std::string>{"A", "B"});
    CHECK(c.tables.at("sim").integer("timeout_ms") == 100);
    REQUIRE(c.array("fault").size() == 2);
    CHECK(c.array("fault")[1].integer("delay_ms") == 5);
    CHECK(c.array("missing").empty());
    CHECK(c.root.str("absent", "d") == "d");

    SimConfig sim = sim_config_from(c);
    CHECK(sim.seed == 42);
    REQUIRE(sim.faults.size() == 2);
    CHECK(sim.faults[0].kind == FaultRule::Kind::Drop);
    CHECK(sim.faults[1].delay_ms == 5);
  }

  TEST_CASE("string escapes") {
    Config c = parse_config("s = \"a\\\"b\\\\c\\n\"\n");
    CHECK(c.root.str("s") == "a\"b\\c\n");
  }

  TEST_CASE("errors carry a line") {
    for (const char* bad : {"x = ", "x = \"open", "[t\n", "= 1", "x = [1, 2", "x = 1\nx = 2"}) {
      CAPTURE(bad);
      CHECK_THROWS_AS(parse_config(bad), Error);
    }
    try {
      parse_config("a = 1\nb = @");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
    CHECK_THROWS_AS(fault_kind_from_string("explode"), Error);
  }
}
