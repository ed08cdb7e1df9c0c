#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "cyberlogic/crypto.hpp"
#include "cyberlogic/engine.hpp"
#include "cyberlogic/evidence.hpp"
#include "cyberlogic/services.hpp"

namespace cyberlogic {

// ---------------------------------------------------------------------------
// Wire protocol

enum class MsgType {
  Query,
  Broadcast,
  Answer,
  Fail,
  Ping,
  Pong,
  CheckReq,
  CheckResp,
  TimeReq,
  TimeResp,
  NonceReq,
  NonceResp,
  Error,
};

std::string to_string(MsgType t);
MsgType msg_type_from_string(const std::string& s);

inline constexpr std::size_t kMaxFrame = 16u << 20;

struct Message {
  MsgType type = MsgType::Ping;
  std::string qid;
  std::string from;
  std::string to;
  SessionChain session;
  std::optional<Formula> goal;
  std::vector<std::string> vars;
  int budget = 0;
  std::optional<Substitution> subst;
  Bytes cert;
  std::string reason;

  bool operator==(const Message&) const = default;
};

// One JSON object per line: {type, qid, from, to, session, goal_b64, vars, budget, subst?, cert_b64?, reason?}.
std::string to_json(const Message& m);
// Throws Error(Decode) on malformed or oversized frames.
Message from_json(std::string_view line);

std::string fail_reason(Status s);
Status status_from_reason(const std::string& reason);

// Synchronous request/response delivery. nullopt means the request timed out.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::optional<Message> request(const Message& m) = 0;
};

// ---------------------------------------------------------------------------
// Node

struct NodeConfig {
  KeyPair key;
  PrincipalId id;
  Policy policy;
  std::optional<Policy> common;
  KeyDirectory directory;  // peers in routing order
  int depth = 64;
  std::optional<std::uint64_t> seed;  // seeded session tokens for reproducible runs
  std::uint64_t session_idle_timeout = 600'000;
  std::uint64_t broadcast_timeout_ms = 2'000;
  // Optional selective routing: peers a broadcast may reach.
  std::function<bool(const std::string& peer, const Formula& goal)> selective;
  bool trace = false;
};

struct NodeMetrics {
  std::atomic<std::size_t> queries_in{0};
  std::atomic<std::size_t> queries_out{0};
  std::atomic<std::size_t> answers{0};
  std::atomic<std::size_t> fails{0};
  std::atomic<std::size_t> duplicates_ignored{0};
  std::atomic<std::size_t> checks{0};
};

class CheckerRegistry;

class Node {
 public:
  explicit Node(NodeConfig cfg, Transport* transport = nullptr);
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  const std::string& name() const { return cfg_.id.name; }
  const PrincipalId& id() const { return cfg_.id; }
  const KeyPair& key() const { return cfg_.key; }
  const KeyDirectory& directory() const { return cfg_.directory; }
  std::shared_ptr<const Policy> policy() const;
  const std::optional<Policy>& common() const { return cfg_.common; }
  // Every policy this node has served, oldest first.
  std::vector<std::shared_ptr<const Policy>> policy_history() const;

  void set_transport(Transport* t) { transport_ = t; }
  Transport* transport() const { return transport_; }
  void attach_time_service(TimeService* t) { time_ = t; }
  void attach_nonce_service(NonceService* n) { nonce_ = n; }
  void attach_registry(CheckerRegistry* r) { registry_ = r; }
  TimeService* time_service() const { return time_; }

  // Keeps the previous policy for certificates that pinned its digest.
  void update_policy(Policy p);

  // Thread-safe entry point for every inbound message.
  Message handle(const Message& m);
  // A reply that arrives after its query was already resolved.
  void late_reply(const Message& m);

  // Local query submission.
  SolveResult submit(const Formula& goal, std::optional<int> depth = std::nullopt);
  // Certificate for an answer of submit(goal); sealed by this node.
  Certificate certify(const Formula& goal, const Answer& answer, bool seal = true) const;

  const NodeMetrics& metrics() const { return metrics_; }
  std::vector<std::string> trace() const;
  std::vector<std::string> session_tokens() const;
  void expire_sessions(std::uint64_t now);

  // Context used by the checker on this node: own policies, the common policy, and registry
  // checkers for foreign digests.
  CheckContext check_context() const;

 private:
  friend class ActivationRouter;

  SolveResult run(const Formula& goal, int depth, const SessionChain& chain, std::string* token_out);
  std::string new_token();
  std::string next_qid();
  bool resolve_qid(const std::string& qid);
  Message handle_query(const Message& m);
  Message handle_check(const Message& m);

  NodeConfig cfg_;
  Transport* transport_;
  TimeService* time_ = nullptr;
  NonceService* nonce_ = nullptr;
  CheckerRegistry* registry_ = nullptr;

  mutable std::mutex mu_;
  std::vector<std::shared_ptr<const Policy>> history_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex session_mu_;
  std::set<std::string> resolved_;
  std::unique_ptr<Rng> rng_;
  std::uint64_t qid_counter_ = 0;
  std::uint64_t activation_counter_ = 0;
  std::uint64_t clock_ = 0;
  std::vector<std::string> trace_;
  mutable std::vector<std::unique_ptr<RemoteChecker>> checkers_;
  NodeMetrics metrics_;
};

// ---------------------------------------------------------------------------
// Remote checking through the registry

struct Verdict {
  bool ok = false;
  std::string path;
  std::string reason;
  std::optional<SignedAttestation> signature;
};

Formula verdict_formula(const std::string& owner, const Digest& policy, const Digest& evidence, bool ok);
// Digest binding a checking request: formula, evidence and hypothesis env.
Digest check_request_digest(const Formula& phi, const Evidence& e, const HypothesisEnv& env);

// Forwards (evidence, formula) to the registered checker of `policy`. Throws Registry on an
// unknown digest, Transport when the endpoint does not answer, Crypto on a forged verdict.
Verdict remote_check(Transport& transport, const CheckerRegistry& registry, const KeyDirectory& keys,
                     const std::string& from, const Digest& policy, const Evidence& e,
                     const Formula& phi, const HypothesisEnv& env = {});

class RegistryChecker : public RemoteChecker {
 public:
  RegistryChecker(Transport& t, const CheckerRegistry& reg, const KeyDirectory& keys, std::string from,
                  std::string owner)
      : transport_(t), registry_(reg), keys_(keys), from_(std::move(from)), owner_(std::move(owner)) {}
  std::string owner() const override { return owner_; }
  CheckResult remote_check(const Digest& digest, const Evidence& e, const Formula& phi,
                           const HypothesisEnv& env) override;

 private:
  Transport& transport_;
  const CheckerRegistry& registry_;
  const KeyDirectory& keys_;
  std::string from_;
  std::string owner_;
};

// Adds a RegistryChecker for every registered digest not already present in ctx.
void add_registry_checkers(CheckContext& ctx, std::vector<std::unique_ptr<RemoteChecker>>& owned,
                           Transport& t, const CheckerRegistry& reg, const KeyDirectory& keys,
                           const std::string& from);

// ---------------------------------------------------------------------------
// In-process simulator

struct FaultRule {
  enum class Kind { Drop, Delay, Duplicate, StripSession, ForgeSession };
  Kind kind = Kind::Drop;
  std::string type;      // message type name; empty matches any. Duplicate rules match replies.
  std::string contains;  // substring of the printed goal; empty matches any
  std::string from, to;
  int skip = 0;          // matching messages to let through first
  int count = -1;        // applications; -1 is unlimited
  double probability = 1.0;
  std::uint64_t delay_ms = 0;
};

struct SimConfig {
  std::uint64_t seed = 1;
  std::vector<FaultRule> faults;
  std::uint64_t timeout_ms = 2'000;
};

class Simulator : public Transport {
 public:
  explicit Simulator(SimConfig cfg = {});
  void add(Node& n);
  std::optional<Message> request(const Message& m) override;

  // "<time> <frame>" per delivered, dropped or returned message.
  std::vector<std::string> transcript() const;
  // Raw frames as they would appear on the wire.
  std::vector<std::string> frames() const;
  void clear_transcript();
  std::uint64_t clock() const { return clock_; }
  // Delivers duplicated replies to their senders after the originals were consumed.
  void flush_duplicates();

 private:
  bool matches(FaultRule& r, const Message& m);
  void record(const std::string& tag, const Message& m);

  SimConfig cfg_;
  std::map<std::string, Node*> nodes_;
  std::mt19937_64 rng_;
  std::vector<int> seen_;
  std::vector<std::string> transcript_;
  std::vector<std::string> frames_;
  std::uint64_t clock_ = 0;
  std::vector<std::pair<Node*, Message>> pending_duplicates_;
  std::recursive_mutex mu_;
};

// ---------------------------------------------------------------------------
// TCP transport with an authenticated-encryption channel per peer pair

class TcpTransport : public Transport {
 public:
  TcpTransport(KeyPair key, PrincipalId self, KeyDirectory directory, std::uint64_t timeout_ms = 5'000);
  std::optional<Message> request(const Message& m) override;
  void set_address(const std::string& peer, const std::string& host_port);

 private:
  KeyPair key_;
  PrincipalId self_;
  KeyDirectory directory_;
  std::map<std::string, std::string> addresses_;
  std::uint64_t timeout_ms_;
  std::mutex mu_;
};

class TcpServer {
 public:
  TcpServer(Node& node, const std::string& host, std::uint16_t port);
  ~TcpServer();
  void start();
  void stop();
  std::uint16_t port() const { return port_; }
  std::size_t protocol_errors() const { return protocol_errors_; }

 private:
  void serve();
  void connection(int fd);

  Node& node_;
  std::string host_;
  std::uint16_t port_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::thread thread_;
  std::mutex workers_mu_;
  std::vector<std::thread> workers_;
  std::atomic<std::size_t> protocol_errors_{0};
};

// Parses "host:port".
std::pair<std::string, std::uint16_t> parse_address(const std::string& host_port);

}  // namespace cyberlogic
