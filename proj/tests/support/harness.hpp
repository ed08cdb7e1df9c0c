#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cyberlogic/engine.hpp"
#include "cyberlogic/evidence.hpp"
#include "cyberlogic/parser.hpp"
#include "cyberlogic/scenarios.hpp"
#include "oracles.hpp"

namespace testing {

using namespace cyberlogic;

// ---------------------------------------------------------------------------
// Random ground Horn programs: at most 12 clauses, 3 predicates and 4 constants. Half of
// them wrap every atom in an attestation by the single principal K.

struct RandomProgram {
  std::vector<oracle::Rule> rules;
  std::vector<oracle::Atom> universe;  // every ground atom of the signature
  std::string text;                    // policy source for owner K
  bool attested = false;
};

inline std::string atom_text(const oracle::Atom& a, bool attested) {
  std::string s = a.pred + "(";
  for (std::size_t i = 0; i < a.args.size(); ++i) s += (i ? ", " : "") + a.args[i];
  s += ")";
  return attested ? "K says " + s : s;
}

inline RandomProgram random_program(oracle::Rand& rng) {
  RandomProgram p;
  p.attested = rng.chance(50);
  int npreds = 1 + rng.below(3);
  int nconsts = 1 + rng.below(4);
  std::vector<int> arity;
  std::string decls = "sort D.\nconst ";
  for (int c = 0; c < nconsts; ++c) decls += (c ? ", c" : "c") + std::to_string(c);
  decls += " : D.\n";
  for (int i = 0; i < npreds; ++i) {
    arity.push_back(1 + rng.below(2));
    decls += "pred p" + std::to_string(i) + (arity[i] == 1 ? "(D).\n" : "(D, D).\n");
  }
  for (int i = 0; i < npreds; ++i)
    for (int a = 0; a < nconsts; ++a)
      for (int b = 0; b < (arity[i] == 2 ? nconsts : 1); ++b) {
        oracle::Atom at{"p" + std::to_string(i), {"c" + std::to_string(a)}};
        if (arity[i] == 2) at.args.push_back("c" + std::to_string(b));
        p.universe.push_back(at);
      }
  auto pick = [&] { return p.universe[rng.below(static_cast<int>(p.universe.size()))]; };
  int nclauses = 1 + rng.below(12);
  std::string body_text;
  for (int c = 0; c < nclauses; ++c) {
    oracle::Rule r{pick(), {}};
    int nbody = rng.chance(35) ? 0 : 1 + rng.below(3);
    for (int b = 0; b < nbody; ++b) r.body.push_back(pick());
    body_text += "r" + std::to_string(c) + ": ";
    for (std::size_t b = 0; b < r.body.size(); ++b)
      body_text += (b ? " /\\ " : "") + atom_text(r.body[b], p.attested);
    if (!r.body.empty()) body_text += " => ";
    body_text += atom_text(r.head, p.attested) + ".\n";
    p.rules.push_back(std::move(r));
  }
  p.text = decls + body_text;
  return p;
}

// ---------------------------------------------------------------------------
// One principal solving against its own policy, without a network.

struct LocalNode {
  std::string name;
  KeyPair key;
  PrincipalId id;
  Policy policy;
  KeyDirectory directory;

  LocalNode(const std::string& owner, std::string_view text, std::uint64_t seed = 7) : name(owner) {
    std::tie(key, id) = derive_keypair(seed, owner);
    directory.add(DirectoryEntry{id, key.public_key, ""});
    policy = parse_policy(text, owner);
  }

  Signature sig() const {
    Signature s = Signature::base();
    s.merge(policy.sig);
    return s;
  }

  Formula goal(const std::string& text) const { return parse_goal(text, sig()); }

  SolveResult solve(const Formula& g, int depth = 64, std::size_t answers = 1) const {
    SolverContext ctx;
    ctx.self = name;
    ctx.own = &policy;
    ctx.key = &key;
    ctx.identity = id;
    SolverConfig cfg;
    cfg.depth = depth;
    cfg.max_answers = answers;
    return cyberlogic::solve(ctx, g, cfg);
  }

  CheckResult check(const Formula& g, const Evidence& e, std::size_t* steps = nullptr) const {
    CheckContext ctx;
    ctx.add(policy);
    ctx.keys = &directory;
    Signature s = sig();
    ctx.sig = &s;
    ctx.steps = steps;
    return cyberlogic::check(ctx, {}, e, g);
  }
};

// ---------------------------------------------------------------------------
// Simulated deployments from inline sources.

inline std::unique_ptr<Deployment> deploy(const std::map<std::string, std::string>& files,
                                          std::vector<std::string> nodes,
                                          std::vector<std::string> services = {},
                                          std::uint64_t seed = 1, SimConfig sim = {}) {
  DeploymentSpec spec;
  spec.policies = PolicySet::from_sources(files);
  spec.nodes = std::move(nodes);
  spec.services = std::move(services);
  spec.seed = seed;
  sim.seed = seed;
  spec.sim = std::move(sim);
  return std::make_unique<Deployment>(std::move(spec));
}

// Submits at `at`, certifies the first answer and checks it with every policy available.
struct Submitted {
  SolveResult result;
  std::optional<Certificate> cert;
  CheckResult check;
};

inline Submitted submit(Deployment& d, const std::string& at, const std::string& goal_text) {
  Submitted s;
  Formula g = d.parse_query(goal_text);
  s.result = d.node(at).submit(g);
  if (s.result.ok()) {
    s.cert = d.node(at).certify(g, s.result.answers.front());
    s.check = check_certificate(d.local_context(), *s.cert);
  }
  return s;
}

}  // namespace testing
