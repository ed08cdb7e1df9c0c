#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cyberlogic/config.hpp"
#include "cyberlogic/evidence.hpp"
#include "cyberlogic/node.hpp"
#include "cyberlogic/services.hpp"

namespace cyberlogic {

// ---------------------------------------------------------------------------
// Policy sets on disk: preamble.cl (shared declarations), common.cl, and <Owner>.cl per node.

struct PolicySet {
  std::string preamble_text;
  Signature sig;  // base signature extended by the preamble
  std::optional<Policy> common;
  std::map<std::string, Policy> policies;  // by owner
  std::map<std::string, std::string> sources;  // file name -> text, for writing back

  // Parses with the same conventions as load_policy_dir.
  static PolicySet from_sources(const std::map<std::string, std::string>& files);
  void add(const std::string& owner, const std::string& text);
  void write(const std::string& dir) const;
  // Registers every policy (and the common one) in ctx.
  void add_to(CheckContext& ctx) const;
};

PolicySet load_policy_dir(const std::string& dir);

// ---------------------------------------------------------------------------
// In-process deployment over the simulator

struct DeploymentSpec {
  PolicySet policies;
  std::vector<std::string> nodes;     // directory order
  std::vector<std::string> services;  // "T", "N"
  long long clock = 0;                // logical time attested before the run
  std::uint64_t seed = 1;
  int depth = 64;
  SimConfig sim;
  bool trace = false;
};

class Deployment {
 public:
  explicit Deployment(DeploymentSpec spec);
  ~Deployment();
  Deployment(const Deployment&) = delete;
  Deployment& operator=(const Deployment&) = delete;

  Node& node(const std::string& name);
  bool has_node(const std::string& name) const { return nodes_.count(name) > 0; }
  Simulator& sim() { return *sim_; }
  TimeService* time() { return time_.get(); }
  NonceService* nonce() { return nonce_.get(); }
  CheckerRegistry& registry() { return registry_; }
  const KeyDirectory& directory() const { return directory_; }
  const PolicySet& policies() const { return spec_.policies; }
  const DeploymentSpec& spec() const { return spec_; }
  const std::pair<KeyPair, PrincipalId>& keys(const std::string& name) const;

  Formula parse_query(const std::string& text) const;
  // Checking context with every policy of the deployment available locally.
  CheckContext local_context() const;
  // Checking context that resolves each node's digests through the registry, as seen by
  // `from` (a node of the deployment).
  CheckContext remote_context(const std::string& from, std::vector<std::unique_ptr<RemoteChecker>>& owned);

 private:
  DeploymentSpec spec_;
  std::map<std::string, std::pair<KeyPair, PrincipalId>> keys_;
  KeyDirectory directory_;
  std::unique_ptr<Simulator> sim_;
  std::unique_ptr<TimeService> time_;
  std::unique_ptr<NonceService> nonce_;
  CheckerRegistry registry_;
  std::map<std::string, std::unique_ptr<Node>> nodes_;
};

// Reads seed, timeout_ms, and [[fault]] tables (kind, type, contains, from, to, skip, count,
// probability, delay_ms) into a simulator configuration.
SimConfig sim_config_from(const Config& cfg);
FaultRule::Kind fault_kind_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Scenarios

struct ScenarioOptions {
  std::optional<std::uint64_t> seed;
  std::optional<int> depth;
  std::optional<long long> revoke_at;
  std::optional<long long> use_at;
  int rounds = 1;          // Needham-Schroeder rounds
  bool without_ca1 = false;  // delegation: drop CA's delegation clause
  std::vector<FaultRule> faults;
  bool trace = false;
};

struct QueryOutcome {
  std::string label;
  std::string goal_text;
  Formula goal;
  std::optional<bool> expect;
  bool main = false;
  SolveResult result;
  std::optional<Certificate> certificate;
  CheckResult check;
};

struct ScenarioResult {
  std::string name;
  std::vector<std::string> transcript;
  std::vector<QueryOutcome> queries;
  std::optional<Certificate> certificate;  // of the main query
  bool ok = false;
  std::string reason;
  double elapsed_ms = 0;
  std::map<std::string, std::string> notes;  // scenario-specific observations
  PolicySet policies;                        // as deployed
  std::map<std::string, std::vector<std::string>> traces;  // per node, with ScenarioOptions::trace
};

std::vector<std::string> scenario_names();
// Files of a built-in scenario: "<file>" -> text.
std::map<std::string, std::string> scenario_files(const std::string& name);

// Deployment spec and scenario config of a built-in scenario after option overrides.
std::pair<DeploymentSpec, Config> scenario_spec(const std::string& name, const ScenarioOptions& opts);

ScenarioResult run_scenario(const std::string& name, const ScenarioOptions& opts = {});
// Runs a deployment described by a scenario.toml in dir.
ScenarioResult run_scenario_config(const std::string& dir, const ScenarioOptions& opts = {});

// The QUERY goals of a transcript, printed, in order.
std::vector<std::string> transcript_queries(const std::vector<std::string>& transcript);

// ---------------------------------------------------------------------------
// Tampering helpers

enum class Mutation { Signature, Label, TermArg };

struct MutationSite {
  std::string path;  // evidence tree address, as used in check failures
  Mutation kind;
  std::size_t bits;  // number of distinct single-bit flips at this site
};

// Every place where a single-bit mutation of the given kinds applies.
std::vector<MutationSite> mutation_sites(const Evidence& e);
// Flips bit `bit` of the site; returns false if the site does not exist.
bool mutate(Evidence& e, const MutationSite& site, std::size_t bit);
// "<path>" or "<path>@<bit>"; the first applicable mutation kind at the node is used.
bool tamper(Certificate& c, const std::string& spec);

// Flips bit `bit` of the byte string (bit 0 is the low bit of byte 0).
void flip_bit(Bytes& b, std::size_t bit);

}  // namespace cyberlogic
