#include "cyberlogic/scenarios.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cyberlogic/error.hpp"
#include "cyberlogic/parser.hpp"

namespace cyberlogic {

namespace detail {
const std::vector<std::pair<std::string, std::string>>& embedded_scenario_files();
}

namespace fs = std::filesystem;

namespace {

constexpr const char* kPreamble = "preamble.cl";
constexpr const char* kCommon = "common.cl";
constexpr const char* kScenarioConfig = "scenario.toml";

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::Usage, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Usage, "cannot write " + p.string());
  out << text;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
    s.replace(pos, from.size(), to);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Policy sets

PolicySet PolicySet::from_sources(const std::map<std::string, std::string>& files) {
  PolicySet ps;
  ps.sig = Signature::base();
  if (auto it = files.find(kPreamble); it != files.end()) {
    ps.preamble_text = it->second;
    ps.sig = parse_policy(it->second, "").sig;
    ps.sources[kPreamble] = it->second;
  }
  if (auto it = files.find(kCommon); it != files.end()) {
    ps.common = parse_policy(it->second, "", ps.sig);
    ps.sources[kCommon] = it->second;
  }
  for (const auto& [file, text] : files) {
    if (!ends_with(file, ".cl") || file == kPreamble || file == kCommon) continue;
    ps.add(file.substr(0, file.size() - 3), text);
  }
  return ps;
}

void PolicySet::add(const std::string& owner, const std::string& text) {
  policies[owner] = parse_policy(text, owner, sig);
  sources[owner + ".cl"] = text;
}

void PolicySet::write(const std::string& dir) const {
  fs::create_directories(dir);
  for (const auto& [file, text] : sources) write_file(fs::path(dir) / file, text);
}

void PolicySet::add_to(CheckContext& ctx) const {
  for (const auto& [owner, p] : policies) ctx.policies[p.digest] = &p;
  if (common) ctx.policies[common->digest] = &*common;
}

PolicySet load_policy_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::Usage, "not a policy directory: " + dir);
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".cl") continue;
    files[e.path().filename().string()] = read_file(e.path());
  }
  return PolicySet::from_sources(files);
}

// ---------------------------------------------------------------------------
// Deployment

Deployment::Deployment(DeploymentSpec spec) : spec_(std::move(spec)) {
  std::vector<std::string> names = spec_.nodes;
  names.insert(names.end(), spec_.services.begin(), spec_.services.end());
  for (const auto& n : names) {
    if (keys_.count(n)) throw Error(ErrorKind::Usage, "principal " + n + " listed twice");
    keys_.emplace(n, derive_keypair(spec_.seed, n));
    const auto& [kp, id] = keys_.at(n);
    directory_.add(DirectoryEntry{id, kp.public_key, ""});
  }
  sim_ = std::make_unique<Simulator>(spec_.sim);
  for (const auto& s : spec_.services) {
    const auto& [kp, id] = keys_.at(s);
    if (s == kTimePrincipal) {
      time_ = std::make_unique<TimeService>(kp, id, TimeService::Mode::Logical, 0);
      time_->advance_to(spec_.clock);
    } else if (s == kNoncePrincipal) {
      nonce_ = std::make_unique<NonceService>(kp, id, spec_.seed);
    } else {
      throw Error(ErrorKind::Usage, "unknown service " + s);
    }
  }
  for (const auto& n : names) {
    const auto& [kp, id] = keys_.at(n);
    NodeConfig cfg;
    cfg.key = kp;
    cfg.id = id;
    if (auto it = spec_.policies.policies.find(n); it != spec_.policies.policies.end()) {
      cfg.policy = it->second;
    } else {
      cfg.policy.owner = n;
      cfg.policy.sig = spec_.policies.sig;
      cfg.policy.rehash();
    }
    cfg.common = spec_.policies.common;
    cfg.directory = directory_;
    cfg.depth = spec_.depth;
    cfg.seed = spec_.seed;
    cfg.trace = spec_.trace;
    auto node = std::make_unique<Node>(std::move(cfg));
    if (n == kTimePrincipal && time_) node->attach_time_service(time_.get());
    if (n == kNoncePrincipal && nonce_) node->attach_nonce_service(nonce_.get());
    node->attach_registry(&registry_);
    sim_->add(*node);
    nodes_.emplace(n, std::move(node));
  }
  for (const auto& n : spec_.nodes) {
    const auto& [kp, id] = keys_.at(n);
    registry_.register_checker(*nodes_.at(n)->policy(), n, kp, id);
  }
}

Deployment::~Deployment() = default;

Node& Deployment::node(const std::string& name) {
  auto it = nodes_.find(name);
  if (it == nodes_.end()) throw Error(ErrorKind::Usage, "no node " + name + " in this deployment");
  return *it->second;
}

const std::pair<KeyPair, PrincipalId>& Deployment::keys(const std::string& name) const {
  auto it = keys_.find(name);
  if (it == keys_.end()) throw Error(ErrorKind::Usage, "no principal " + name);
  return it->second;
}

Formula Deployment::parse_query(const std::string& text) const {
  Signature sig = spec_.policies.sig;
  for (const auto& [n, p] : spec_.policies.policies) sig.merge(p.sig);
  if (spec_.policies.common) sig.merge(spec_.policies.common->sig);
  return parse_goal(text, sig);
}

CheckContext Deployment::local_context() const {
  CheckContext ctx;
  for (const auto& [n, node] : nodes_)
    for (const auto& p : node->policy_history()) ctx.policies[p->digest] = p.get();
  if (const auto& c = nodes_.begin()->second->common()) ctx.policies[c->digest] = &*c;
  ctx.keys = &directory_;
  return ctx;
}

CheckContext Deployment::remote_context(const std::string& from,
                                        std::vector<std::unique_ptr<RemoteChecker>>& owned) {
  CheckContext ctx;
  if (const auto& c = node(from).common()) ctx.policies[c->digest] = &*c;
  ctx.keys = &directory_;
  add_registry_checkers(ctx, owned, *sim_, registry_, directory_, from);
  return ctx;
}

FaultRule::Kind fault_kind_from_string(const std::string& s) {
  if (s == "drop") return FaultRule::Kind::Drop;
  if (s == "delay") return FaultRule::Kind::Delay;
  if (s == "duplicate") return FaultRule::Kind::Duplicate;
  if (s == "strip_session") return FaultRule::Kind::StripSession;
  if (s == "forge_session") return FaultRule::Kind::ForgeSession;
  throw Error(ErrorKind::Usage, "unknown fault kind " + s);
}

SimConfig sim_config_from(const Config& cfg) {
  SimConfig sc;
  sc.seed = static_cast<std::uint64_t>(cfg.root.integer("seed", 1));
  sc.timeout_ms = static_cast<std::uint64_t>(cfg.root.integer("timeout_ms", 2'000));
  for (const auto& t : cfg.array("fault")) {
    FaultRule r;
    r.kind = fault_kind_from_string(t.str("kind"));
    r.type = t.str("type");
    r.contains = t.str("contains");
    r.from = t.str("from");
    r.to = t.str("to");
    r.skip = static_cast<int>(t.integer("skip", 0));
    r.count = static_cast<int>(t.integer("count", -1));
    r.probability = t.number("probability", 1.0);
    r.delay_ms = static_cast<std::uint64_t>(t.integer("delay_ms", 0));
    sc.faults.push_back(r);
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Scenarios

std::vector<std::string> scenario_names() { return {"hospital", "delegation", "revocation", "timed", "ns"}; }

std::map<std::string, std::string> scenario_files(const std::string& name) {
  std::map<std::string, std::string> out;
  std::string prefix = name + "/";
  for (const auto& [path, text] : detail::embedded_scenario_files())
    if (path.rfind(prefix, 0) == 0) out[path.substr(prefix.size())] = text;
  if (out.empty()) throw Error(ErrorKind::Usage, "unknown scenario " + name);
  return out;
}

namespace {

std::pair<DeploymentSpec, Config> spec_from_files(std::map<std::string, std::string> files,
                                                  const ScenarioOptions& opts) {
  auto cit = files.find(kScenarioConfig);
  if (cit == files.end()) throw Error(ErrorKind::Usage, "scenario has no scenario.toml");
  Config cfg = parse_config(cit->second);
  std::string name = cfg.root.str("name");

  long long revoke_at = opts.revoke_at.value_or(cfg.root.integer("revoke_at", 0));
  long long use_at = opts.use_at.value_or(cfg.root.integer("use_at", 0));
  if (name == "revocation") {
    // CA attests notRevoked(L, t) for every instant up to the revocation; L attests the use.
    std::string ca = files["CA.cl"];
    for (long long t = 1; t <= revoke_at; ++t)
      ca += "nr" + std::to_string(t) + ": CA says notRevoked(L, " + std::to_string(t) + ").\n";
    files["CA.cl"] = ca;
    files["L.cl"] += "l1: L says license(Bob, " + std::to_string(use_at) + ").\n";
  }
  if (name == "delegation" && opts.without_ca1) files["CA.cl"] = "# ca1 withdrawn\n";

  DeploymentSpec spec;
  std::map<std::string, std::string> cl;
  for (const auto& [f, t] : files)
    if (ends_with(f, ".cl")) cl[f] = t;
  spec.policies = PolicySet::from_sources(cl);
  spec.nodes = cfg.root.strings("nodes");
  spec.services = cfg.root.strings("services");
  spec.clock = cfg.root.integer("clock", 0);
  spec.seed = opts.seed.value_or(static_cast<std::uint64_t>(cfg.root.integer("seed", 1)));
  spec.depth = opts.depth.value_or(static_cast<int>(cfg.root.integer("depth", 64)));
  spec.sim = sim_config_from(cfg);
  spec.sim.seed = spec.seed;
  spec.sim.faults.insert(spec.sim.faults.end(), opts.faults.begin(), opts.faults.end());
  spec.trace = opts.trace;

  cfg.root.values["revoke_at"] = ConfigValue{static_cast<std::int64_t>(revoke_at)};
  cfg.root.values["use_at"] = ConfigValue{static_cast<std::int64_t>(use_at)};
  return {std::move(spec), std::move(cfg)};
}

std::string placeholders(std::string text, const Config& cfg) {
  text = replace_all(text, "{use_at}", std::to_string(cfg.root.integer("use_at", 0)));
  return replace_all(text, "{revoke_at}", std::to_string(cfg.root.integer("revoke_at", 0)));
}

std::string predicate_of(const Formula& f) {
  const Formula* cur = &f;
  while (!cur->subs.empty() && !cur->is(Formula::Kind::Atom)) cur = &cur->body();
  return cur->pred;
}

ScenarioResult run_spec(DeploymentSpec spec, const Config& cfg, const ScenarioOptions& opts) {
  auto start = std::chrono::steady_clock::now();
  ScenarioResult out;
  out.name = cfg.root.str("name");
  out.policies = spec.policies;
  Deployment d(std::move(spec));
  Node& submit = d.node(cfg.root.str("submit"));
  CheckContext ctx = d.local_context();

  bool all_match = true;
  bool main_ok = false;
  bool has_main = false;
  int rounds = out.name == "ns" ? std::max(1, opts.rounds) : 1;
  for (int round = 0; round < rounds; ++round) {
    for (const auto& q : cfg.array("query")) {
      QueryOutcome o;
      o.label = q.str("label");
      if (rounds > 1) o.label += "#" + std::to_string(round + 1);
      o.goal_text = placeholders(q.str("goal"), cfg);
      o.goal = d.parse_query(o.goal_text);
      if (q.has("expect")) o.expect = q.str("expect") == "ok";
      o.main = q.boolean("main", false) && round == 0;
      o.result = submit.submit(o.goal);
      d.sim().flush_duplicates();
      bool success = o.result.ok();
      if (success) {
        o.certificate = submit.certify(o.goal, o.result.answers.front());
        o.check = check_certificate(ctx, *o.certificate);
        success = o.check.ok;
      } else {
        o.check = CheckResult::failure("", "no answer: " + to_string(o.result.status));
      }
      if (o.expect && *o.expect != success) all_match = false;
      if (o.main) {
        has_main = true;
        main_ok = success;
        out.certificate = o.certificate;
      }
      out.queries.push_back(std::move(o));
    }
  }
  out.transcript = d.sim().transcript();
  if (opts.trace)
    for (const auto& n : d.spec().nodes) out.traces[n] = d.node(n).trace();

  std::string why;
  if (out.name == "ns") {
    std::vector<std::string> preds;
    for (const auto& line : out.transcript) {
      auto sp = line.find(' ');
      auto sp2 = line.find(' ', sp + 1);
      if (line.compare(sp + 1, 4, "SEND") != 0) continue;
      Message m = from_json(std::string_view(line).substr(sp2 + 1));
      if (m.type == MsgType::Query && m.goal) preds.push_back(predicate_of(*m.goal));
    }
    std::vector<std::string> expected;
    for (int r = 0; r < std::max(1, opts.rounds); ++r)
      expected.insert(expected.end(), {"msg1", "msg2", "msg3"});
    std::string order;
    for (const auto& p : preds) order += (order.empty() ? "" : ",") + p;
    out.notes["order"] = order;
    std::set<std::string> nonces;
    std::size_t issued = 0;
    for (const auto& line : out.transcript) {
      auto sp = line.find(' ');
      auto sp2 = line.find(' ', sp + 1);
      if (line.compare(sp + 1, 4, "RECV") != 0) continue;
      Message m = from_json(std::string_view(line).substr(sp2 + 1));
      if (m.type == MsgType::NonceResp && !m.vars.empty()) {
        nonces.insert(m.vars[0]);
        ++issued;
      }
    }
    std::string ns;
    for (const auto& n : nonces) ns += (ns.empty() ? "" : ",") + n;
    out.notes["nonces"] = ns;
    out.notes["distinct_nonces"] = std::to_string(nonces.size()) + "/" + std::to_string(issued);
    if (main_ok && preds != expected) why = "subquery order " + order;
    if (main_ok && nonces.size() != issued) why = "a nonce was issued twice";
  }

  out.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (!has_main) {
    why = "scenario has no main query";
  } else if (!main_ok) {
    const QueryOutcome* m = nullptr;
    for (const auto& o : out.queries)
      if (o.main) m = &o;
    why = m && m->result.ok() ? "certificate rejected at " + m->check.path + ": " + m->check.reason
                              : "main query failed (" + (m ? fail_reason(m->result.status) : "?") + ")";
  } else if (!all_match && why.empty()) {
    for (const auto& o : out.queries)
      if (o.expect && *o.expect != (o.result.ok() && o.check.ok))
        why += (why.empty() ? "" : "; ") + o.label + " expected " + (*o.expect ? "ok" : "fail");
  }
  out.ok = why.empty();
  out.reason = why;
  return out;
}

}  // namespace

std::pair<DeploymentSpec, Config> scenario_spec(const std::string& name, const ScenarioOptions& opts) {
  return spec_from_files(scenario_files(name), opts);
}

ScenarioResult run_scenario(const std::string& name, const ScenarioOptions& opts) {
  auto [spec, cfg] = scenario_spec(name, opts);
  return run_spec(std::move(spec), cfg, opts);
}

ScenarioResult run_scenario_config(const std::string& dir, const ScenarioOptions& opts) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension();
    if (ext == ".cl" || ext == ".toml") files[e.path().filename().string()] = read_file(e.path());
  }
  auto [spec, cfg] = spec_from_files(std::move(files), opts);
  return run_spec(std::move(spec), cfg, opts);
}

std::vector<std::string> transcript_queries(const std::vector<std::string>& transcript) {
  std::vector<std::string> out;
  for (const auto& line : transcript) {
    auto sp = line.find(' ');
    if (sp == std::string::npos) continue;
    auto sp2 = line.find(' ', sp + 1);
    if (sp2 == std::string::npos || line.compare(sp + 1, sp2 - sp - 1, "SEND") != 0) continue;
    Message m = from_json(std::string_view(line).substr(sp2 + 1));
    if ((m.type == MsgType::Query || m.type == MsgType::Broadcast) && m.goal) out.push_back(print(*m.goal));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tampering

void flip_bit(Bytes& b, std::size_t bit) {
  if (bit / 8 >= b.size()) throw Error(ErrorKind::Usage, "bit index out of range");
  b[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
}

namespace {

void flip_in_string(std::string& s, std::size_t bit) {
  s[bit / 8] = static_cast<char>(static_cast<unsigned char>(s[bit / 8]) ^ (1u << (bit % 8)));
}

std::size_t term_bits(const std::vector<Term>& ts) {
  std::size_t n = 0;
  for (const auto& t : ts) n += 8 * t.name.size();
  return n;
}

void sites(const Evidence& e, const std::string& path, std::vector<MutationSite>& out) {
  using EK = Evidence::Kind;
  if (e.leaf && !e.leaf->signature.empty())
    out.push_back({path, Mutation::Signature, 8 * e.leaf->signature.size()});
  if ((e.is(EK::ClauseApp) || e.is(EK::Hyp)) && !e.name.empty())
    out.push_back({path, Mutation::Label, 8 * e.name.size()});
  if ((e.is(EK::ClauseApp) || e.is(EK::Witness)) && term_bits(e.terms) > 0)
    out.push_back({path, Mutation::TermArg, term_bits(e.terms)});
  for (std::size_t i = 0; i < e.subs.size(); ++i) sites(e.subs[i], path + "/" + std::to_string(i), out);
}

Evidence* at(Evidence& e, const std::string& path) {
  Evidence* cur = &e;
  std::size_t pos = 0;
  while (pos < path.size()) {
    if (path[pos] != '/') return nullptr;
    std::size_t next = path.find('/', pos + 1);
    std::string seg = path.substr(pos + 1, next == std::string::npos ? std::string::npos : next - pos - 1);
    std::size_t idx = 0;
    try {
      idx = std::stoul(seg);
    } catch (const std::exception&) {
      return nullptr;
    }
    if (idx >= cur->subs.size()) return nullptr;
    cur = &cur->subs[idx];
    pos = next == std::string::npos ? path.size() : next;
  }
  return cur;
}

}  // namespace

std::vector<MutationSite> mutation_sites(const Evidence& e) {
  std::vector<MutationSite> out;
  sites(e, "", out);
  return out;
}

bool mutate(Evidence& e, const MutationSite& site, std::size_t bit) {
  Evidence* n = at(e, site.path);
  if (!n || bit >= site.bits) return false;
  switch (site.kind) {
    case Mutation::Signature:
      if (!n->leaf || bit / 8 >= n->leaf->signature.size()) return false;
      flip_bit(n->leaf->signature, bit);
      return true;
    case Mutation::Label:
      if (bit / 8 >= n->name.size()) return false;
      flip_in_string(n->name, bit);
      return true;
    case Mutation::TermArg:
      for (auto& t : n->terms) {
        if (bit < 8 * t.name.size()) {
          flip_in_string(t.name, bit);
          return true;
        }
        bit -= 8 * t.name.size();
      }
      return false;
  }
  return false;
}

bool tamper(Certificate& c, const std::string& spec) {
  std::string path = spec;
  std::size_t bit = 0;
  if (auto a = spec.find('@'); a != std::string::npos) {
    path = spec.substr(0, a);
    try {
      bit = std::stoul(spec.substr(a + 1));
    } catch (const std::exception&) {
      throw Error(ErrorKind::Usage, "bad tamper bit in " + spec);
    }
  }
  if (path == "$") path.clear();
  for (const auto& s : mutation_sites(c.root))
    if (s.path == path && bit < s.bits) return mutate(c.root, s, bit);
  return false;
}

}  // namespace cyberlogic
