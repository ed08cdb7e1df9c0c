#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cyberlogic/crypto.hpp"
#include "cyberlogic/evidence.hpp"
#include "cyberlogic/syntax.hpp"

namespace cyberlogic {

// Idempotent variable bindings: no bound variable occurs in any value.
using Substitution = std::map<std::string, Term>;

Term apply(const Substitution& s, const Term& t);
Formula apply(const Substitution& s, const Formula& f);

// Most general unifier of t1 and t2 extending s (sort-aware when sig is given).
std::optional<Substitution> unify(const Term& t1, const Term& t2, const Substitution& s = {},
                                  const Signature* sig = nullptr);

// Trail-based bindings used by the search. Values are stored unresolved.
class Bindings {
 public:
  explicit Bindings(const Signature* sig = nullptr) : sig_(sig) {}

  std::size_t mark() const { return trail_.size(); }
  void undo(std::size_t mark);

  Term walk(const Term& t) const;
  Term resolve(const Term& t) const;
  Formula resolve(const Formula& f) const;
  Evidence resolve(const Evidence& e) const;

  bool unify(const Term& a, const Term& b);
  // Atoms and attestation chains with equal shape.
  bool unify(const Formula& a, const Formula& b);

  // Scope levels for the eigenvariable escape check. A metavariable may only be bound to
  // eigenconstants created before it; unregistered variables are unrestricted.
  void set_level(const std::string& var, std::size_t level);
  void register_eigen(const std::string& name, std::size_t index);

  Substitution snapshot(const std::vector<std::string>& vars) const;

 private:
  bool bind(const Term& var, const Term& value);
  bool sort_le(const std::string& a, const std::string& b) const;

  struct Entry {
    std::string var;
    bool is_level;
    std::optional<std::size_t> old_level;
  };

  const Signature* sig_;
  std::unordered_map<std::string, Term> map_;
  std::unordered_map<std::string, std::size_t> level_;
  std::unordered_map<std::string, std::size_t> eigen_;
  std::vector<Entry> trail_;
};

// ---------------------------------------------------------------------------
// Sessions

struct Hypothesis {
  std::string label;
  Formula formula;
  std::vector<Clause> clauses;
};

// Live hypothesis stack of one activation, visible to callbacks that carry its token.
struct Session {
  std::string token;
  std::string owner;
  std::optional<std::string> parent;
  std::vector<Hypothesis> hypotheses;
  std::uint64_t created_at = 0;
  std::uint64_t last_used = 0;
};

using SessionChain = std::vector<std::string>;

// ---------------------------------------------------------------------------
// Search

enum class Status { Ok, Failure, DepthExhausted, Flounder, NoRoute };
std::string to_string(Status s);

struct Answer {
  Substitution bindings;  // on the free variables of the goal
  Evidence evidence;
};

struct RemoteOutcome {
  Status status = Status::Failure;
  std::optional<Answer> answer;
  std::string reason;
};

// Routing and service hooks of the hosting node.
class Router {
 public:
  virtual ~Router() = default;
  // Directory order, excluding self.
  virtual std::vector<std::string> peers() const = 0;
  virtual RemoteOutcome query(const std::string& peer, const Formula& goal, int budget,
                              const SessionChain& chain) = 0;
  virtual std::optional<Term> fresh_nonce() = 0;
  // Receipt attesting the service clock, signed by the time source.
  virtual std::optional<SignedAttestation> clock_receipt() = 0;
};

// Facts synthesized by a service (the time source answers time and stamped queries).
class FactProvider {
 public:
  virtual ~FactProvider() = default;
  virtual std::vector<std::pair<Formula, Evidence>> facts(const Formula& goal) = 0;
};

struct SolverConfig {
  int depth = 64;
  std::size_t max_answers = 1;
  // Prefixes fresh names so that answers from several activations never collide.
  std::string name_prefix;
  std::vector<std::string>* trace = nullptr;
  std::string session_label = "-";
};

struct SolverStats {
  std::size_t steps = 0;
  std::size_t backchains = 0;
  std::size_t max_chain = 0;  // most backchains on one stack path
  std::size_t remote_queries = 0;
  std::size_t loop_prunes = 0;
};

struct SolveResult {
  Status status = Status::Failure;
  std::vector<Answer> answers;
  SolverStats stats;
  std::string reason;

  bool ok() const { return status == Status::Ok; }
};

struct SolverContext {
  std::string self;
  const Policy* own = nullptr;
  const Policy* common = nullptr;
  const KeyPair* key = nullptr;
  std::optional<PrincipalId> identity;
  Router* router = nullptr;
  FactProvider* facts = nullptr;
  // Session of this activation (hypotheses pushed by D => G) and the visible ancestors.
  std::shared_ptr<Session> session;
  std::vector<std::shared_ptr<Session>> visible;
  SessionChain chain;
  // Guards session hypothesis stacks shared with concurrent callbacks.
  std::mutex* session_mutex = nullptr;
};

SolveResult solve(const SolverContext& ctx, const Formula& goal, const SolverConfig& cfg = {});
// solve(knows Q. goal).
SolveResult solve_knowledge(const SolverContext& ctx, const std::vector<Term>& principals,
                            const Formula& goal, const SolverConfig& cfg = {});

// Signature of the context: base, the own and the common policy.
Signature context_signature(const SolverContext& ctx);

}  // namespace cyberlogic
