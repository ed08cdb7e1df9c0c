#include "cyberlogic/node.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

#include "cyberlogic/codec.hpp"
#include "cyberlogic/error.hpp"

namespace cyberlogic {

using json = nlohmann::ordered_json;

namespace {

const std::vector<std::pair<MsgType, const char*>>& type_names() {
  static const std::vector<std::pair<MsgType, const char*>> names{
      {MsgType::Query, "QUERY"},         {MsgType::Broadcast, "BROADCAST"},
      {MsgType::Answer, "ANSWER"},       {MsgType::Fail, "FAIL"},
      {MsgType::Ping, "PING"},           {MsgType::Pong, "PONG"},
      {MsgType::CheckReq, "CHECK_REQ"},  {MsgType::CheckResp, "CHECK_RESP"},
      {MsgType::TimeReq, "TIME_REQ"},    {MsgType::TimeResp, "TIME_RESP"},
      {MsgType::NonceReq, "NONCE_REQ"},  {MsgType::NonceResp, "NONCE_RESP"},
      {MsgType::Error, "ERROR"},
  };
  return names;
}

std::string var_spec(const Term& v) { return v.name + ":" + v.sort; }

void collect_free_terms(const Formula& f, std::map<std::string, Term>& out, std::set<std::string>& bound) {
  std::function<void(const Term&)> t = [&](const Term& x) {
    if (x.is_var() && !bound.count(x.name)) out.emplace(x.name, x);
    for (const auto& a : x.args) t(a);
  };
  for (const auto& x : f.terms) t(x);
  bool binds = f.is(Formula::Kind::Forall) || f.is(Formula::Kind::Exists);
  bool fresh = binds && bound.insert(f.var).second;
  for (const auto& s : f.subs) collect_free_terms(s, out, bound);
  if (fresh) bound.erase(f.var);
}

std::vector<std::string> goal_vars(const Formula& goal) {
  std::map<std::string, Term> vars;
  std::set<std::string> bound;
  collect_free_terms(goal, vars, bound);
  std::vector<std::string> out;
  for (const auto& [n, v] : vars) out.push_back(var_spec(v));
  return out;
}

}  // namespace

std::string to_string(MsgType t) {
  for (const auto& [k, n] : type_names())
    if (k == t) return n;
  return "ERROR";
}

MsgType msg_type_from_string(const std::string& s) {
  for (const auto& [k, n] : type_names())
    if (s == n) return k;
  throw Error(ErrorKind::Decode, "unknown message type " + s);
}

std::string to_json(const Message& m) {
  json j;
  j["type"] = to_string(m.type);
  j["qid"] = m.qid;
  j["from"] = m.from;
  j["to"] = m.to;
  j["session"] = m.session;
  j["goal_b64"] = m.goal ? to_base64(encode(*m.goal)) : std::string();
  j["vars"] = m.vars;
  j["budget"] = m.budget;
  if (m.subst) {
    json s = json::object();
    for (const auto& [v, t] : *m.subst) s[v] = to_base64(encode(t));
    j["subst"] = s;
  }
  if (!m.cert.empty()) j["cert_b64"] = to_base64(m.cert);
  if (!m.reason.empty()) j["reason"] = m.reason;
  return j.dump();
}

Message from_json(std::string_view line) {
  if (line.size() > kMaxFrame) throw Error(ErrorKind::Decode, "frame exceeds 16 MiB");
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Decode, std::string("malformed frame: ") + e.what());
  }
  try {
    if (!j.is_object()) throw Error(ErrorKind::Decode, "frame is not an object");
    Message m;
    m.type = msg_type_from_string(j.at("type").get<std::string>());
    m.qid = j.at("qid").get<std::string>();
    m.from = j.at("from").get<std::string>();
    m.to = j.at("to").get<std::string>();
    m.session = j.at("session").get<std::vector<std::string>>();
    auto goal = j.at("goal_b64").get<std::string>();
    if (!goal.empty()) m.goal = decode_formula(from_base64(goal));
    m.vars = j.at("vars").get<std::vector<std::string>>();
    m.budget = j.at("budget").get<int>();
    if (j.contains("subst")) {
      Substitution s;
      for (const auto& [k, v] : j["subst"].items()) {
        Bytes b = from_base64(v.get<std::string>());
        ByteReader r(b);
        s[k] = decode_term(r);
        r.expect_done();
      }
      m.subst = std::move(s);
    }
    if (j.contains("cert_b64")) m.cert = from_base64(j["cert_b64"].get<std::string>());
    if (j.contains("reason")) m.reason = j["reason"].get<std::string>();
    for (const auto& [k, v] : j.items()) {
      static const std::set<std::string> known{"type", "qid",  "from",   "to",   "session",  "goal_b64",
                                               "vars", "budget", "subst", "cert_b64", "reason"};
      if (!known.count(k)) throw Error(ErrorKind::Decode, "unknown frame field " + k);
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Decode, std::string("malformed frame: ") + e.what());
  }
}

std::string fail_reason(Status s) {
  switch (s) {
    case Status::DepthExhausted: return "depth";
    case Status::NoRoute: return "no-route";
    case Status::Flounder: return "flounder";
    default: return "no-answer";
  }
}

Status status_from_reason(const std::string& reason) {
  if (reason.rfind("depth", 0) == 0) return Status::DepthExhausted;
  if (reason.rfind("no-route", 0) == 0) return Status::NoRoute;
  if (reason.rfind("flounder", 0) == 0) return Status::Flounder;
  return Status::Failure;
}

// ---------------------------------------------------------------------------
// Node

class ActivationRouter : public Router {
 public:
  explicit ActivationRouter(Node& n) : node_(n) {}

  std::vector<std::string> peers() const override {
    std::vector<std::string> out;
    for (const auto& e : node_.cfg_.directory.entries())
      if (e.id.name != node_.name()) out.push_back(e.id.name);
    return out;
  }

  RemoteOutcome query(const std::string& peer, const Formula& goal, int budget,
                      const SessionChain& chain) override {
    RemoteOutcome out;
    if (!node_.transport_) {
      out.status = Status::NoRoute;
      return out;
    }
    if (node_.cfg_.selective && !node_.cfg_.selective(peer, goal)) return out;
    Message m;
    m.type = MsgType::Query;
    m.qid = node_.next_qid();
    m.from = node_.name();
    m.to = peer;
    m.session = chain;
    m.goal = goal;
    m.vars = goal_vars(goal);
    m.budget = budget;
    ++node_.metrics_.queries_out;
    auto reply = node_.transport_->request(m);
    if (!reply) {
      out.reason = "no-answer";
      return out;
    }
    if (reply->qid != m.qid || !node_.resolve_qid(m.qid)) {
      ++node_.metrics_.duplicates_ignored;
      out.reason = "no-answer";
      return out;
    }
    if (reply->type == MsgType::Answer) {
      try {
        Certificate c = decode_certificate(reply->cert);
        Answer a;
        a.evidence = std::move(c.root);
        if (reply->subst) a.bindings = *reply->subst;
        out.status = Status::Ok;
        out.answer = std::move(a);
      } catch (const Error& e) {
        out.reason = e.what();
      }
      return out;
    }
    out.status = status_from_reason(reply->reason);
    out.reason = reply->reason;
    return out;
  }

  std::optional<Term> fresh_nonce() override {
    if (node_.nonce_) return node_.nonce_->fresh(static_cast<long long>(node_.clock_)).nonce;
    if (!node_.transport_) return std::nullopt;
    Message m;
    m.type = MsgType::NonceReq;
    m.qid = node_.next_qid();
    m.from = node_.name();
    m.to = kNoncePrincipal;
    auto reply = node_.transport_->request(m);
    if (!reply || reply->type != MsgType::NonceResp || reply->vars.empty()) return std::nullopt;
    node_.resolve_qid(m.qid);
    return Term::constant(reply->vars[0], sorts::Nonce);
  }

  std::optional<SignedAttestation> clock_receipt() override {
    if (node_.time_) return node_.time_->receipt();
    if (!node_.transport_) return std::nullopt;
    Message m;
    m.type = MsgType::TimeReq;
    m.qid = node_.next_qid();
    m.from = node_.name();
    m.to = kTimePrincipal;
    auto reply = node_.transport_->request(m);
    if (!reply || reply->type != MsgType::TimeResp) return std::nullopt;
    node_.resolve_qid(m.qid);
    try {
      return decode_attestation(reply->cert);
    } catch (const Error&) {
      return std::nullopt;
    }
  }

 private:
  Node& node_;
};

Node::Node(NodeConfig cfg, Transport* transport) : cfg_(std::move(cfg)), transport_(transport) {
  if (Digest::of(cfg_.key.public_key) != cfg_.id.fingerprint)
    throw Error(ErrorKind::KeyMismatch, "node key does not match identity " + cfg_.id.name);
  if (const DirectoryEntry* d = cfg_.directory.find(cfg_.id.name); d && d->id.fingerprint != cfg_.id.fingerprint)
    throw Error(ErrorKind::KeyMismatch, "directory key for " + cfg_.id.name + " does not match the node key");
  if (cfg_.policy.owner.empty()) cfg_.policy.owner = cfg_.id.name;
  cfg_.policy.rehash();
  if (cfg_.common) cfg_.common->rehash();
  history_.push_back(std::make_shared<const Policy>(cfg_.policy));
  if (cfg_.seed) {
    ByteWriter w;
    w.u64(*cfg_.seed);
    w.str(cfg_.id.name);
    Digest d = Digest::of(w.bytes());
    std::uint64_t s = 0;
    for (int i = 0; i < 8; ++i) s = (s << 8) | d.value[static_cast<std::size_t>(i)];
    rng_ = std::make_unique<SeededRng>(s);
  } else {
    rng_ = std::make_unique<SystemRng>();
  }
}

Node::~Node() = default;

std::shared_ptr<const Policy> Node::policy() const {
  std::lock_guard<std::mutex> lock(mu_);
  return history_.back();
}

std::vector<std::shared_ptr<const Policy>> Node::policy_history() const {
  std::lock_guard<std::mutex> lock(mu_);
  return history_;
}

void Node::update_policy(Policy p) {
  if (p.owner.empty()) p.owner = cfg_.id.name;
  p.rehash();
  std::lock_guard<std::mutex> lock(mu_);
  history_.push_back(std::make_shared<const Policy>(std::move(p)));
}

std::string Node::new_token() {
  Bytes b(16);
  std::lock_guard<std::mutex> lock(mu_);
  rng_->fill(b);
  return to_hex(b);
}

std::string Node::next_qid() {
  std::lock_guard<std::mutex> lock(mu_);
  return name() + "-" + std::to_string(++qid_counter_);
}

bool Node::resolve_qid(const std::string& qid) {
  std::lock_guard<std::mutex> lock(mu_);
  return resolved_.insert(qid).second;
}

void Node::late_reply(const Message& m) {
  std::lock_guard<std::mutex> lock(mu_);
  if (resolved_.count(m.qid)) ++metrics_.duplicates_ignored;
}

std::vector<std::string> Node::trace() const {
  std::lock_guard<std::mutex> lock(mu_);
  return trace_;
}

std::vector<std::string> Node::session_tokens() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<std::string> out;
  for (const auto& [t, s] : sessions_) out.push_back(t);
  return out;
}

void Node::expire_sessions(std::uint64_t now) {
  std::lock_guard<std::mutex> lock(mu_);
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (now > it->second->last_used + cfg_.session_idle_timeout && it->second->hypotheses.empty())
      it = sessions_.erase(it);
    else
      ++it;
  }
}

SolveResult Node::run(const Formula& goal, int depth, const SessionChain& chain, std::string* token_out) {
  std::vector<std::shared_ptr<Session>> visible;
  auto session = std::make_shared<Session>();
  std::shared_ptr<const Policy> own;
  std::uint64_t activation = 0;
  {
    std::lock_guard<std::mutex> lock(mu_);
    ++clock_;
    for (const auto& tok : chain) {
      auto it = sessions_.find(tok);
      if (it != sessions_.end()) {
        it->second->last_used = clock_;
        visible.push_back(it->second);
      }
    }
    own = history_.back();
    activation = ++activation_counter_;
  }
  session->token = new_token();
  session->owner = name();
  if (!chain.empty()) session->parent = chain.back();
  session->created_at = session->last_used = clock_;
  {
    std::lock_guard<std::mutex> lock(mu_);
    sessions_[session->token] = session;
  }
  if (token_out) *token_out = session->token;

  ActivationRouter router(*this);
  SolverContext ctx;
  ctx.self = name();
  ctx.own = own.get();
  ctx.common = cfg_.common ? &*cfg_.common : nullptr;
  ctx.key = &cfg_.key;
  ctx.identity = cfg_.id;
  ctx.router = &router;
  ctx.facts = time_;
  ctx.session = session;
  ctx.visible = visible;
  ctx.chain = chain;
  ctx.session_mutex = &session_mu_;

  std::vector<std::string> lines;
  SolverConfig sc;
  sc.depth = depth;
  sc.name_prefix = name() + std::to_string(activation) + "_";
  sc.session_label = session->token.substr(0, 8);
  if (cfg_.trace) sc.trace = &lines;
  SolveResult res = solve(ctx, goal, sc);
  if (cfg_.trace) {
    std::lock_guard<std::mutex> lock(mu_);
    trace_.insert(trace_.end(), lines.begin(), lines.end());
  }
  return res;
}

SolveResult Node::submit(const Formula& goal, std::optional<int> depth) {
  return run(goal, depth.value_or(cfg_.depth), {}, nullptr);
}

Certificate Node::certify(const Formula& goal, const Answer& answer, bool seal) const {
  Certificate c;
  c.root_formula = apply(answer.bindings, goal);
  c.root = answer.evidence;
  complete_certificate(c, cfg_.directory);
  if (seal) seal_certificate(c, cfg_.key, cfg_.id);
  return c;
}

CheckContext Node::check_context() const {
  CheckContext ctx;
  for (const auto& p : policy_history()) ctx.policies[p->digest] = p.get();
  if (cfg_.common) ctx.policies[cfg_.common->digest] = &*cfg_.common;
  ctx.keys = &cfg_.directory;
  if (registry_ && transport_) {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& e : registry_->entries()) {
      if (ctx.policies.count(e.policy)) continue;
      RemoteChecker* found = nullptr;
      for (const auto& c : checkers_)
        if (auto* rc = dynamic_cast<RegistryChecker*>(c.get()); rc && rc->owner() == e.owner.name) found = rc;
      if (!found) {
        checkers_.push_back(std::make_unique<RegistryChecker>(*transport_, *registry_, cfg_.directory,
                                                              cfg_.id.name, e.owner.name));
        found = checkers_.back().get();
      }
      ctx.policies[e.policy] = found;
    }
  }
  return ctx;
}

Message Node::handle(const Message& m) {
  Message reply;
  reply.qid = m.qid;
  reply.from = name();
  reply.to = m.from;
  try {
    switch (m.type) {
      case MsgType::Query:
      case MsgType::Broadcast: return handle_query(m);
      case MsgType::Ping: reply.type = MsgType::Pong; return reply;
      case MsgType::CheckReq: return handle_check(m);
      case MsgType::TimeReq:
        if (!time_) break;
        reply.type = MsgType::TimeResp;
        reply.cert = encode(time_->receipt());
        return reply;
      case MsgType::NonceReq: {
        if (!nonce_) break;
        const auto& issued = nonce_->fresh(static_cast<long long>(clock_));
        reply.type = MsgType::NonceResp;
        reply.vars = {issued.nonce.name};
        reply.cert = encode(issued.attestation);
        return reply;
      }
      default: break;
    }
    reply.type = MsgType::Error;
    reply.reason = "protocol: unexpected " + to_string(m.type);
  } catch (const Error& e) {
    reply.type = MsgType::Error;
    reply.reason = std::string("protocol: ") + e.what();
  }
  return reply;
}

Message Node::handle_query(const Message& m) {
  ++metrics_.queries_in;
  Message reply;
  reply.qid = m.qid;
  reply.from = name();
  reply.to = m.from;
  if (!m.goal) {
    reply.type = MsgType::Error;
    reply.reason = "protocol: query without goal";
    return reply;
  }
  SolveResult res = run(*m.goal, std::max(0, m.budget), m.session, nullptr);
  if (!res.ok()) {
    ++metrics_.fails;
    reply.type = MsgType::Fail;
    reply.reason = fail_reason(res.status);
    return reply;
  }
  const Answer& a = res.answers.front();
  Formula phi = apply(a.bindings, *m.goal);

  // Send-side self-check; foreign digests and remote sessions are taken on trust here.
  CheckContext ctx;
  for (const auto& p : policy_history()) ctx.policies[p->digest] = p.get();
  if (cfg_.common) ctx.policies[cfg_.common->digest] = &*cfg_.common;
  ctx.keys = &cfg_.directory;
  ctx.trust_unresolved = true;
  HypothesisEnv env;
  {
    std::lock_guard<std::mutex> lock(session_mu_);
    std::lock_guard<std::mutex> lock2(mu_);
    for (const auto& tok : m.session) {
      auto it = sessions_.find(tok);
      if (it == sessions_.end()) continue;
      for (const auto& h : it->second->hypotheses) env.emplace_back(h.label, h.formula);
    }
  }
  CheckResult cr = check(ctx, env, a.evidence, phi);
  if (!cr) {
    ++metrics_.fails;
    reply.type = MsgType::Fail;
    reply.reason = "no-answer: self-check failed at " + cr.path + ": " + cr.reason;
    return reply;
  }
  ++metrics_.answers;
  Certificate frag;
  frag.root_formula = phi;
  frag.root = a.evidence;
  complete_certificate(frag, cfg_.directory);
  reply.type = MsgType::Answer;
  reply.subst = a.bindings;
  reply.cert = encode_certificate(frag);
  return reply;
}

namespace {

std::pair<Formula, Evidence> wrap_env(Formula phi, Evidence e, const HypothesisEnv& env) {
  for (auto it = env.rbegin(); it != env.rend(); ++it) {
    phi = Formula::implies(it->second, std::move(phi), it->first);
    e = Evidence::abstraction(it->first, std::move(e));
  }
  return {std::move(phi), std::move(e)};
}

}  // namespace

Formula verdict_formula(const std::string& owner, const Digest& policy, const Digest& evidence, bool ok) {
  return Formula::attest(Term::constant(owner, sorts::Principal),
                         Formula::atom("verdict", {Term::constant(policy.hex(), "$Digest"),
                                                   Term::constant(evidence.hex(), "$Digest"),
                                                   Term::constant(ok ? "ok" : "nok", "$Verdict")}));
}

Digest check_request_digest(const Formula& phi, const Evidence& e, const HypothesisEnv& env) {
  auto [f, ev] = wrap_env(phi, e, env);
  ByteWriter w;
  w.str("cyberlogic-check-v1");
  encode(w, f);
  encode(w, ev);
  return Digest::of(w.bytes());
}

Message Node::handle_check(const Message& m) {
  ++metrics_.checks;
  Message reply;
  reply.type = MsgType::CheckResp;
  reply.qid = m.qid;
  reply.from = name();
  reply.to = m.from;
  if (!m.goal || m.vars.empty()) {
    reply.type = MsgType::Error;
    reply.reason = "protocol: malformed check request";
    return reply;
  }
  Digest policy = Digest::from_hex(m.vars[0]);
  Certificate c = decode_certificate(m.cert);
  bool known = false;
  for (const auto& p : policy_history())
    if (p->digest == policy) known = true;
  CheckResult r = CheckResult::failure("$", "unknown policy digest");
  if (known) {
    CheckContext ctx = check_context();
    ctx.store = &c.store;
    r = check(ctx, {}, c.root, *m.goal);
  }
  Digest req = check_request_digest(*m.goal, c.root, {});
  SignedAttestation sa = sign_attestation(cfg_.key, cfg_.id, verdict_formula(name(), policy, req, r.ok));
  reply.cert = encode(sa);
  reply.reason = r.ok ? "ok" : "nok " + r.path + ": " + r.reason;
  return reply;
}

Verdict remote_check(Transport& transport, const CheckerRegistry& registry, const KeyDirectory& keys,
                     const std::string& from, const Digest& policy, const Evidence& e, const Formula& phi,
                     const HypothesisEnv& env) {
  static std::atomic<std::uint64_t> counter{0};
  auto entry = registry.lookup(policy);
  if (!entry) throw Error(ErrorKind::Registry, "no checker registered for digest " + policy.hex().substr(0, 16));
  auto [f, ev] = wrap_env(phi, e, env);
  Message m;
  m.type = MsgType::CheckReq;
  m.qid = from + "-chk-" + std::to_string(++counter);
  m.from = from;
  m.to = entry->endpoint;
  m.goal = f;
  m.vars = {policy.hex()};
  Certificate c;
  c.root_formula = f;
  c.root = ev;
  m.cert = encode_certificate(c);
  auto reply = transport.request(m);
  if (!reply) throw Error(ErrorKind::Transport, "checker endpoint " + entry->endpoint + " did not answer");
  if (reply->type != MsgType::CheckResp)
    throw Error(ErrorKind::Transport, "unexpected reply from checker: " + reply->reason);
  SignedAttestation sa = decode_attestation(reply->cert);
  const DirectoryEntry* key = keys.find(entry->owner.name);
  if (!key || key->id.fingerprint != entry->owner.fingerprint)
    throw Error(ErrorKind::Crypto, "no key for checker owner " + entry->owner.name);
  auto payload = verify_attestation(key->public_key, sa);
  bool ok = reply->reason == "ok";
  Digest req = check_request_digest(f, ev, {});
  if (!payload || !(*payload == verdict_formula(entry->owner.name, policy, req, ok)))
    throw Error(ErrorKind::Crypto, "verdict signature mismatch");
  Verdict v;
  v.ok = ok;
  v.signature = std::move(sa);
  if (!ok) {
    std::string rest = reply->reason.size() > 4 ? reply->reason.substr(4) : std::string();
    auto colon = rest.find(": ");
    v.path = colon == std::string::npos ? rest : rest.substr(0, colon);
    v.reason = colon == std::string::npos ? rest : rest.substr(colon + 2);
  }
  return v;
}

CheckResult RegistryChecker::remote_check(const Digest& digest, const Evidence& e, const Formula& phi,
                                          const HypothesisEnv& env) {
  try {
    Verdict v = cyberlogic::remote_check(transport_, registry_, keys_, from_, digest, e, phi, env);
    if (v.ok) return CheckResult::success();
    return CheckResult::failure(v.path, "remote checker of " + owner_ + ": " + v.reason);
  } catch (const Error& err) {
    return CheckResult::failure("", err.what());
  }
}

void add_registry_checkers(CheckContext& ctx, std::vector<std::unique_ptr<RemoteChecker>>& owned,
                           Transport& t, const CheckerRegistry& reg, const KeyDirectory& keys,
                           const std::string& from) {
  for (const auto& e : reg.entries()) {
    if (ctx.policies.count(e.policy)) continue;
    owned.push_back(std::make_unique<RegistryChecker>(t, reg, keys, from, e.owner.name));
    ctx.policies[e.policy] = owned.back().get();
  }
}

// ---------------------------------------------------------------------------
// Simulator

Simulator::Simulator(SimConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed), seen_(cfg_.faults.size(), 0) {}

void Simulator::add(Node& n) {
  nodes_[n.name()] = &n;
  n.set_transport(this);
}

bool Simulator::matches(FaultRule& r, const Message& m) {
  if (!r.type.empty() && r.type != to_string(m.type)) return false;
  if (!r.from.empty() && r.from != m.from) return false;
  if (!r.to.empty() && r.to != m.to) return false;
  if (!r.contains.empty() && (!m.goal || print(*m.goal).find(r.contains) == std::string::npos)) return false;
  std::size_t idx = static_cast<std::size_t>(&r - cfg_.faults.data());
  int seen = seen_[idx]++;
  if (seen < r.skip) return false;
  if (r.count >= 0 && seen - r.skip >= r.count) return false;
  if (r.probability < 1.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng_) >= r.probability) return false;
  }
  return true;
}

void Simulator::record(const std::string& tag, const Message& m) {
  std::string frame = to_json(m);
  transcript_.push_back(std::to_string(clock_) + " " + tag + " " + frame);
  frames_.push_back(std::move(frame));
}

std::optional<Message> Simulator::request(const Message& m0) {
  std::lock_guard<std::recursive_mutex> lock(mu_);
  flush_duplicates();
  Message m = m0;
  ++clock_;
  for (auto& r : cfg_.faults) {
    if (r.kind == FaultRule::Kind::Duplicate || !matches(r, m)) continue;
    switch (r.kind) {
      case FaultRule::Kind::Drop:
        record("DROP", m);
        clock_ += cfg_.timeout_ms;
        return std::nullopt;
      case FaultRule::Kind::Delay:
        clock_ += r.delay_ms;
        if (r.delay_ms >= cfg_.timeout_ms) {
          record("TIMEOUT", m);
          return std::nullopt;
        }
        break;
      case FaultRule::Kind::Duplicate: break;
      case FaultRule::Kind::StripSession: m.session.clear(); break;
      case FaultRule::Kind::ForgeSession: {
        Bytes b(16);
        for (auto& x : b) x = static_cast<std::uint8_t>(rng_());
        m.session = {to_hex(b)};
        break;
      }
    }
  }
  record("SEND", m);
  auto it = nodes_.find(m.to);
  Message reply;
  if (it == nodes_.end()) {
    reply.type = MsgType::Fail;
    reply.qid = m.qid;
    reply.from = m.to;
    reply.to = m.from;
    reply.reason = "no-route";
  } else {
    reply = it->second->handle(m);
  }
  ++clock_;
  record("RECV", reply);
  // Duplication rules select replies.
  bool duplicate = false;
  for (auto& r : cfg_.faults)
    if (r.kind == FaultRule::Kind::Duplicate && matches(r, reply)) duplicate = true;
  if (duplicate) {
    record("DUP", reply);
    if (auto s = nodes_.find(m.from); s != nodes_.end()) {
      // The original reply reaches the caller first; the copy arrives after resolution.
      Node* sender = s->second;
      pending_duplicates_.emplace_back(sender, reply);
    }
  }
  return reply;
}

void Simulator::flush_duplicates() {
  std::lock_guard<std::recursive_mutex> lock(mu_);
  for (auto& [node, msg] : pending_duplicates_) node->late_reply(msg);
  pending_duplicates_.clear();
}

std::vector<std::string> Simulator::transcript() const { return transcript_; }
std::vector<std::string> Simulator::frames() const { return frames_; }

void Simulator::clear_transcript() {
  std::lock_guard<std::recursive_mutex> lock(mu_);
  transcript_.clear();
  frames_.clear();
}

}  // namespace cyberlogic
