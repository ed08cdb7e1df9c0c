#include <benchmark/benchmark.h>

#include <string>

#include "cyberlogic/codec.hpp"
#include "cyberlogic/parser.hpp"
#include "cyberlogic/scenarios.hpp"

using namespace cyberlogic;

namespace {

void BM_HospitalQuery(benchmark::State& state) {
  Deployment d(scenario_spec("hospital", {}).first);
  Formula goal = d.parse_query("A says readMedRec(Alice, Peter)");
  for (auto _ : state) {
    SolveResult r = d.node("A").submit(goal);
    benchmark::DoNotOptimize(r);
    d.sim().clear_transcript();
  }
}
BENCHMARK(BM_HospitalQuery);

void BM_ScenarioEndToEnd(benchmark::State& state, const char* name) {
  for (auto _ : state) benchmark::DoNotOptimize(run_scenario(name));
}
BENCHMARK_CAPTURE(BM_ScenarioEndToEnd, hospital, "hospital");
BENCHMARK_CAPTURE(BM_ScenarioEndToEnd, ns, "ns");
BENCHMARK_CAPTURE(BM_ScenarioEndToEnd, delegation, "delegation");

// Checking q(0) /\ ... /\ q(n-1), each conjunct a two-clause derivation.
void BM_CheckConjunction(benchmark::State& state) {
  Policy p = parse_policy("pred p(Int). pred q(Int).\nf: forall x:Int. p(x).\nr: forall x:Int. p(x) => q(x).\n", "K");
  Signature sig = Signature::base();
  sig.merge(p.sig);
  std::vector<Formula> goals;
  std::vector<Evidence> parts;
  for (int i = 0; i < state.range(0); ++i) {
    Term t = Term::integer(i);
    goals.push_back(Formula::atom("q", {t}));
    parts.push_back(Evidence::clause_app("r", p.digest, "K", {t}, {Evidence::clause_app("f", p.digest, "K", {t}, {})}));
  }
  Formula g = Formula::conj(goals);
  Evidence e = Evidence::tuple(parts);
  CheckContext ctx;
  ctx.add(p);
  ctx.sig = &sig;
  for (auto _ : state) {
    CheckResult r = check(ctx, {}, e, g);
    if (!r.ok) state.SkipWithError(r.reason.c_str());
    benchmark::DoNotOptimize(r);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CheckConjunction)->RangeMultiplier(4)->Range(16, 4096)->Complexity(benchmark::oN);

void BM_CertificateCodec(benchmark::State& state) {
  Certificate c = *run_scenario("hospital").certificate;
  for (auto _ : state) {
    Bytes b = encode_certificate(c);
    benchmark::DoNotOptimize(decode_certificate(b));
  }
}
BENCHMARK(BM_CertificateCodec);

void BM_ParsePolicies(benchmark::State& state) {
  auto files = scenario_files("hospital");
  for (auto _ : state) benchmark::DoNotOptimize(PolicySet::from_sources(files));
}
BENCHMARK(BM_ParsePolicies);

}  // namespace

BENCHMARK_MAIN();
