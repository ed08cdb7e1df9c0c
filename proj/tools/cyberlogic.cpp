// cyberlogic: operator command line for nodes, queries, certificates and scenarios.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "cyberlogic/codec.hpp"
#include "cyberlogic/error.hpp"
#include "cyberlogic/evidence.hpp"
#include "cyberlogic/node.hpp"
#include "cyberlogic/parser.hpp"
#include "cyberlogic/scenarios.hpp"
#include "cyberlogic/services.hpp"

namespace fs = std::filesystem;
using namespace cyberlogic;

namespace {

enum Exit { kOk = 0, kLogical = 1, kUsage = 2, kTransport = 3 };

int exit_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Transport: return kTransport;
    case ErrorKind::Usage:
    case ErrorKind::Decode:
    case ErrorKind::Syntax:
    case ErrorKind::Sort:
    case ErrorKind::DuplicateLabel:
    case ErrorKind::NotInFragment:
    case ErrorKind::UnknownMacro: return kUsage;
    default: return kLogical;
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Usage, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Usage, "cannot write " + path.string());
  out << data;
}

void write_bytes(const fs::path& path, const Bytes& b) { write_file(path, std::string(b.begin(), b.end())); }

std::string keydir() {
  const char* d = std::getenv("CYBERLOGIC_KEYDIR");
  return d && *d ? d : ".";
}

KeyPair load_key(const std::string& explicit_path, const std::string& name) {
  std::string path = explicit_path.empty() ? (fs::path(keydir()) / (name + ".key")).string() : explicit_path;
  return load_key_file(path);
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::string print_subst(const Substitution& s) {
  if (s.empty()) return "{}";
  std::string out = "{";
  bool first = true;
  for (const auto& [v, t] : s) {
    out += (first ? "" : ", ") + v + " = " + print(t);
    first = false;
  }
  return out + "}";
}

// Signature for parsing goals: the preamble plus every policy in the directory.
Signature goal_signature(const PolicySet& ps) {
  Signature sig = ps.sig;
  for (const auto& [o, p] : ps.policies) sig.merge(p.sig);
  if (ps.common) sig.merge(ps.common->sig);
  return sig;
}

volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }

// ---------------------------------------------------------------------------

struct KeygenArgs {
  std::string name;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string address;
};

int cmd_keygen(const KeygenArgs& a) {
  auto [kp, id] = a.seed ? derive_keypair(*a.seed, a.name) : [&] {
    SystemRng rng;
    return keygen(a.name, rng);
  }();
  std::string dir = a.out.empty() ? keydir() : a.out;
  fs::create_directories(dir);
  fs::path key = fs::path(dir) / (a.name + ".key");
  save_key_file(key.string(), kp);
  KeyDirectory d;
  d.add(DirectoryEntry{id, kp.public_key, a.address});
  fs::path entry = fs::path(dir) / (a.name + ".dir");
  save_directory(entry.string(), d);
  std::cout << a.name << " " << id.fingerprint.hex() << "\n"
            << "key: " << key.string() << "\n"
            << "directory entry: " << entry.string() << "\n";
  return kOk;
}

struct NodeArgs {
  std::string name;
  std::string key;
  std::string policy;
  std::string policies;
  std::string listen;
  std::string directory;
  std::string transport = "tcp";
  std::string registry;
  std::optional<std::uint64_t> seed;
  int depth = 64;
  std::uint64_t timeout = 5'000;
  bool services = false;
};

int cmd_node(const NodeArgs& a) {
  if (a.transport != "tcp")
    throw Error(ErrorKind::Usage, "a standalone node serves over tcp; use 'scenario' or 'query --transport sim'");
  if (a.listen.empty()) throw Error(ErrorKind::Usage, "--listen HOST:PORT is required");
  KeyDirectory dir = load_directory(a.directory);
  const DirectoryEntry* self = dir.find(a.name);
  if (!self) throw Error(ErrorKind::Usage, a.name + " is not in the directory");
  KeyPair kp = load_key(a.key, a.name);

  PolicySet ps;
  if (!a.policies.empty()) ps = load_policy_dir(a.policies);
  NodeConfig cfg;
  cfg.key = kp;
  cfg.id = self->id;
  if (!a.policy.empty()) {
    cfg.policy = parse_policy(read_file(a.policy), a.name, ps.sig);
  } else if (auto it = ps.policies.find(a.name); it != ps.policies.end()) {
    cfg.policy = it->second;
  } else {
    cfg.policy.owner = a.name;
    cfg.policy.sig = ps.sig;
    cfg.policy.rehash();
  }
  cfg.common = ps.common;
  cfg.directory = dir;
  cfg.depth = a.depth;
  cfg.seed = a.seed;

  TcpTransport transport(kp, self->id, dir, a.timeout);
  Node node(std::move(cfg), &transport);
  std::unique_ptr<TimeService> time;
  std::unique_ptr<NonceService> nonce;
  if (a.name == kTimePrincipal) {
    time = std::make_unique<TimeService>(kp, self->id, TimeService::Mode::Wall);
    time->attest_time();
    node.attach_time_service(time.get());
  }
  if (a.name == kNoncePrincipal) {
    nonce = std::make_unique<NonceService>(kp, self->id, a.seed);
    node.attach_nonce_service(nonce.get());
  }
  std::optional<CheckerRegistry> registry;
  if (!a.registry.empty()) {
    registry = CheckerRegistry::load(a.registry);
    node.attach_registry(&*registry);
  }
  auto [host, port] = parse_address(a.listen);
  TcpServer server(node, host, port);
  server.start();
  std::cout << a.name << " listening on " << host << ":" << server.port() << " policy "
            << node.policy()->digest.hex() << std::endl;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  const auto& m = node.metrics();
  std::cout << "queries_in " << m.queries_in << " queries_out " << m.queries_out << " answers " << m.answers
            << " fails " << m.fails << " protocol_errors " << server.protocol_errors() << std::endl;
  return kOk;
}

struct QueryArgs {
  std::string goal;
  std::string to;
  std::string name = "client";
  std::string key;
  std::string directory;
  std::string policies;
  std::string config;
  std::string transport = "tcp";
  std::string out;
  std::optional<std::uint64_t> seed;
  int depth = 64;
  std::uint64_t timeout = 5'000;
};

void report_certificate(const Certificate& c, const std::string& out) {
  std::cout << "certificate: " << certificate_digest(c).hex() << "\n";
  std::cout << "evidence: " << render_spine(c.root) << "\n";
  if (!out.empty()) {
    write_bytes(out, encode_certificate(c));
    write_file(out + ".txt", certificate_to_text(c));
    std::cout << "written: " << out << "\n";
  }
}

int cmd_query(const QueryArgs& a) {
  if (a.transport == "sim") {
    if (a.config.empty()) throw Error(ErrorKind::Usage, "--transport sim needs --config DIR with scenario.toml");
    ScenarioOptions opts;
    opts.seed = a.seed;
    opts.depth = a.depth;
    auto files = std::map<std::string, std::string>{};
    for (const auto& e : fs::directory_iterator(a.config))
      if (e.is_regular_file()) files[e.path().filename().string()] = read_file(e.path().string());
    Config cfg = parse_config(files.at("scenario.toml"));
    std::map<std::string, std::string> cl;
    for (const auto& [f, t] : files)
      if (f.size() > 3 && f.compare(f.size() - 3, 3, ".cl") == 0) cl[f] = t;
    DeploymentSpec spec;
    spec.policies = PolicySet::from_sources(cl);
    spec.nodes = cfg.root.strings("nodes");
    spec.services = cfg.root.strings("services");
    spec.clock = cfg.root.integer("clock", 0);
    spec.seed = a.seed.value_or(static_cast<std::uint64_t>(cfg.root.integer("seed", 1)));
    spec.depth = a.depth;
    spec.sim = sim_config_from(cfg);
    spec.sim.seed = spec.seed;
    Deployment d(std::move(spec));
    std::string at = a.to.empty() ? cfg.root.str("submit") : a.to;
    Formula goal = d.parse_query(a.goal);
    SolveResult r = d.node(at).submit(goal, a.depth);
    if (!r.ok()) {
      std::cout << "fail: " << fail_reason(r.status) << "\n";
      return kLogical;
    }
    std::cout << "ok " << print_subst(r.answers.front().bindings) << "\n";
    report_certificate(d.node(at).certify(goal, r.answers.front()), a.out);
    return kOk;
  }
  if (a.transport != "tcp") throw Error(ErrorKind::Usage, "--transport must be sim or tcp");
  if (a.to.empty()) throw Error(ErrorKind::Usage, "--to NODE is required");
  KeyDirectory dir = load_directory(a.directory);
  PolicySet ps;
  if (!a.policies.empty()) ps = load_policy_dir(a.policies);
  Formula goal = parse_goal(a.goal, goal_signature(ps));

  KeyPair kp;
  PrincipalId id;
  if (!a.key.empty() || fs::exists(fs::path(keydir()) / (a.name + ".key"))) {
    kp = load_key(a.key, a.name);
    id = principal_id(a.name, kp.public_key);
  } else {
    SystemRng rng;
    std::tie(kp, id) = keygen(a.name, rng);
  }
  TcpTransport transport(kp, id, dir, a.timeout);
  Message m;
  m.type = MsgType::Query;
  m.qid = a.name + "-1";
  m.from = a.name;
  m.to = a.to;
  m.goal = goal;
  for (const auto& v : free_vars(goal)) m.vars.push_back(v);
  m.budget = a.depth;
  auto reply = transport.request(m);
  if (!reply) throw Error(ErrorKind::Transport, "no reply from " + a.to + " within " + std::to_string(a.timeout) + " ms");
  if (reply->type != MsgType::Answer) {
    std::cout << "fail: " << (reply->reason.empty() ? to_string(reply->type) : reply->reason) << "\n";
    return reply->type == MsgType::Error ? kTransport : kLogical;
  }
  Certificate c = decode_certificate(reply->cert);
  std::cout << "ok " << print_subst(reply->subst.value_or(Substitution{})) << "\n";
  report_certificate(c, a.out);
  return kOk;
}

struct CheckArgs {
  std::string cert;
  std::string formula;
  std::string policies;
  std::string directory;
  std::string registry;
  std::string name = "checker";
  std::string key;
  std::uint64_t timeout = 5'000;
};

int cmd_check(const CheckArgs& a) {
  std::string raw = read_file(a.cert);
  Certificate c = load_certificate(Bytes(raw.begin(), raw.end()));
  PolicySet ps;
  if (!a.policies.empty()) ps = load_policy_dir(a.policies);
  if (!a.formula.empty()) {
    Formula f = parse_goal(a.formula, goal_signature(ps));
    if (!(f == c.root_formula)) {
      std::cout << "nok $: certificate proves " << print(c.root_formula) << ", not " << print(f) << "\n";
      return kLogical;
    }
  }
  CheckContext ctx;
  ps.add_to(ctx);
  KeyDirectory dir;
  if (!a.directory.empty()) {
    dir = load_directory(a.directory);
    ctx.keys = &dir;
  }
  std::vector<std::unique_ptr<RemoteChecker>> owned;
  std::optional<TcpTransport> transport;
  std::optional<CheckerRegistry> reg;
  if (!a.registry.empty()) {
    if (a.directory.empty()) throw Error(ErrorKind::Usage, "--registry needs --directory with checker addresses");
    reg = CheckerRegistry::load(a.registry);
    std::string why;
    if (!reg->verify_chain(dir, &why)) {
      std::cout << "nok registry: " << why << "\n";
      return kLogical;
    }
    KeyPair kp;
    PrincipalId id;
    if (!a.key.empty()) {
      kp = load_key_file(a.key);
      id = principal_id(a.name, kp.public_key);
    } else {
      SystemRng rng;
      std::tie(kp, id) = keygen(a.name, rng);
    }
    transport.emplace(kp, id, dir, a.timeout);
    add_registry_checkers(ctx, owned, *transport, *reg, dir, a.name);
  }
  CheckResult r = check_certificate(ctx, c);
  if (r.ok) {
    std::cout << "ok " << print(c.root_formula) << "\n";
    return kOk;
  }
  std::cout << "nok " << (r.path.empty() ? "$" : r.path) << ": " << r.reason << "\n";
  return kLogical;
}

struct RegistryArgs {
  std::string action;
  std::string registry;
  std::string policy;
  std::string policies;
  std::string owner;
  std::string endpoint;
  std::string key;
  std::string directory;
};

int cmd_registry(const RegistryArgs& a) {
  if (a.action == "register") {
    if (a.owner.empty() || a.policy.empty()) throw Error(ErrorKind::Usage, "register needs --owner and --policy");
    CheckerRegistry reg = fs::exists(a.registry) ? CheckerRegistry::load(a.registry) : CheckerRegistry{};
    PolicySet ps;
    if (!a.policies.empty()) ps = load_policy_dir(a.policies);
    Policy p = parse_policy(read_file(a.policy), a.owner, ps.sig);
    KeyPair kp = load_key(a.key, a.owner);
    const auto& e = reg.register_checker(p, a.endpoint.empty() ? a.owner : a.endpoint, kp,
                                         principal_id(a.owner, kp.public_key));
    std::cout << e.position << " " << e.policy.hex() << " " << e.endpoint << " " << e.owner.name << "\n";
    reg.save(a.registry);
    return kOk;
  }
  CheckerRegistry reg = CheckerRegistry::load(a.registry);
  if (a.action == "list") {
    for (const auto& e : reg.entries())
      std::cout << e.position << " " << e.policy.hex() << " " << e.endpoint << " " << e.owner.name << "\n";
    return kOk;
  }
  if (a.action == "verify") {
    KeyDirectory dir = load_directory(a.directory);
    std::string why;
    if (reg.verify_chain(dir, &why)) {
      std::cout << "ok " << reg.entries().size() << " entries\n";
      return kOk;
    }
    std::cout << "nok " << why << "\n";
    return kLogical;
  }
  throw Error(ErrorKind::Usage, "registry action must be register, list or verify");
}

struct ScenarioArgs {
  std::string name;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> depth;
  std::optional<long long> revoke_at;
  std::optional<long long> use_at;
  int rounds = 1;
  bool without_ca1 = false;
  std::string sim_config;
  std::string tamper;
  std::string out;
  std::string transport = "sim";
  bool trace = false;
};

int cmd_scenario(const ScenarioArgs& a) {
  if (a.transport != "sim") throw Error(ErrorKind::Usage, "scenarios run over the in-process simulator");
  ScenarioOptions opts;
  opts.seed = a.seed;
  opts.depth = a.depth;
  opts.revoke_at = a.revoke_at;
  opts.use_at = a.use_at;
  opts.rounds = a.rounds;
  opts.without_ca1 = a.without_ca1;
  opts.trace = a.trace;
  if (!a.sim_config.empty()) opts.faults = sim_config_from(parse_config(read_file(a.sim_config))).faults;
  ScenarioResult r = a.config.empty() ? run_scenario(a.name, opts) : run_scenario_config(a.config, opts);

  std::cout << "scenario " << r.name << ": " << (r.ok ? "ok" : "fail");
  if (!r.ok) std::cout << " (" << r.reason << ")";
  std::cout << "\n";
  for (const auto& q : r.queries) {
    bool success = q.result.ok() && q.check.ok;
    std::cout << "  " << q.label << ": " << (success ? "ok" : "fail");
    if (!q.result.ok()) std::cout << " [" << fail_reason(q.result.status) << "]";
    else if (!q.check.ok) std::cout << " [check " << q.check.path << ": " << q.check.reason << "]";
    std::cout << "  " << q.goal_text << "\n";
    if (q.certificate) std::cout << "    evidence: " << render_spine(q.certificate->root) << "\n";
  }
  for (const auto& [k, v] : r.notes) std::cout << "  " << k << ": " << v << "\n";
  std::cout << "  frames: " << r.transcript.size() << "\n";
  for (const auto& [n, lines] : r.traces)
    for (const auto& l : lines) std::cout << "  " << n << " " << l << "\n";

  int code = r.ok ? kOk : kLogical;
  if (!a.out.empty()) {
    fs::path out(a.out);
    fs::create_directories(out);
    write_file(out / (r.name + ".transcript"), join_lines(r.transcript));
    r.policies.write((out / "policies").string());
    for (const auto& q : r.queries) {
      if (!q.certificate) continue;
      std::string base = q.main ? r.name : r.name + "-" + q.label;
      write_bytes(out / (base + ".cert"), encode_certificate(*q.certificate));
      write_file(out / (base + ".cert.txt"), certificate_to_text(*q.certificate));
    }
    std::cout << "  written: " << out.string() << "\n";
  }
  if (!a.tamper.empty()) {
    if (!r.certificate) throw Error(ErrorKind::Usage, "no certificate to tamper with");
    Certificate c = *r.certificate;
    if (!tamper(c, a.tamper)) throw Error(ErrorKind::Usage, "no mutation site at " + a.tamper);
    CheckContext ctx;
    r.policies.add_to(ctx);
    CheckResult cr = check_certificate(ctx, c);
    CheckResult er = check(ctx, {}, c.root, c.root_formula);
    std::cout << "  tampered " << a.tamper << ": " << (cr.ok ? "ok" : "nok " + cr.path + ": " + cr.reason) << "\n";
    if (!er.ok) std::cout << "  evidence: nok " << er.path << ": " << er.reason << "\n";
    if (!a.out.empty()) write_bytes(fs::path(a.out) / (r.name + ".tampered.cert"), encode_certificate(c));
    code = cr.ok ? kOk : kLogical;
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cyberlogic nodes, queries, certificates and scenarios"};
  app.require_subcommand(1);

  KeygenArgs kg;
  auto* keygen_cmd = app.add_subcommand("keygen", "Generate a key pair and directory entry");
  keygen_cmd->add_option("name", kg.name, "Principal name")->required();
  keygen_cmd->add_option("--seed", kg.seed, "Derive the key deterministically");
  keygen_cmd->add_option("--out", kg.out, "Output directory (default $CYBERLOGIC_KEYDIR or .)");
  keygen_cmd->add_option("--address", kg.address, "host:port recorded in the directory entry");

  NodeArgs na;
  auto* node_cmd = app.add_subcommand("node", "Run a node over TCP");
  node_cmd->add_option("--name", na.name, "Principal name")->required();
  node_cmd->add_option("--key", na.key, "Key file (default $CYBERLOGIC_KEYDIR/<name>.key)");
  node_cmd->add_option("--policy", na.policy, "Policy file");
  node_cmd->add_option("--policies", na.policies, "Directory with preamble.cl and common.cl");
  node_cmd->add_option("--listen", na.listen, "HOST:PORT");
  node_cmd->add_option("--directory", na.directory, "Directory file")->required();
  node_cmd->add_option("--transport", na.transport, "tcp");
  node_cmd->add_option("--registry", na.registry, "Checker registry log");
  node_cmd->add_option("--seed", na.seed, "Seed session tokens");
  node_cmd->add_option("--depth", na.depth, "Default depth budget");
  node_cmd->add_option("--timeout", na.timeout, "Peer timeout in ms");

  QueryArgs qa;
  auto* query_cmd = app.add_subcommand("query", "Submit a goal to a node");
  query_cmd->add_option("goal", qa.goal, "Goal formula")->required();
  query_cmd->add_option("--to", qa.to, "Node that solves the goal");
  query_cmd->add_option("--name", qa.name, "Client name");
  query_cmd->add_option("--key", qa.key, "Client key file");
  query_cmd->add_option("--directory", qa.directory, "Directory file");
  query_cmd->add_option("--policies", qa.policies, "Directory with the shared preamble");
  query_cmd->add_option("--config", qa.config, "Deployment directory with scenario.toml (sim)");
  query_cmd->add_option("--transport", qa.transport, "sim or tcp");
  query_cmd->add_option("--out", qa.out, "Certificate output file");
  query_cmd->add_option("--seed", qa.seed, "Deployment seed (sim)");
  query_cmd->add_option("--depth", qa.depth, "Depth budget");
  query_cmd->add_option("--timeout", qa.timeout, "Reply timeout in ms");

  CheckArgs ca;
  auto* check_cmd = app.add_subcommand("check", "Check a certificate");
  check_cmd->add_option("cert", ca.cert, "Certificate file (binary or text)")->required();
  check_cmd->add_option("--formula", ca.formula, "Formula the certificate must prove");
  check_cmd->add_option("--policies", ca.policies, "Policy directory");
  check_cmd->add_option("--directory", ca.directory, "Directory file (default: keys carried by the certificate)");
  check_cmd->add_option("--registry", ca.registry, "Checker registry for policies not in --policies");
  check_cmd->add_option("--name", ca.name, "Name used towards remote checkers");
  check_cmd->add_option("--key", ca.key, "Key file used towards remote checkers");
  check_cmd->add_option("--timeout", ca.timeout, "Remote checker timeout in ms");

  RegistryArgs ra;
  auto* registry_cmd = app.add_subcommand("registry", "Maintain a checker registry log");
  registry_cmd->add_option("action", ra.action, "register, list or verify")->required();
  registry_cmd->add_option("--registry", ra.registry, "Registry log file")->required();
  registry_cmd->add_option("--policy", ra.policy, "Policy file to register");
  registry_cmd->add_option("--policies", ra.policies, "Directory with the shared preamble");
  registry_cmd->add_option("--owner", ra.owner, "Policy owner");
  registry_cmd->add_option("--endpoint", ra.endpoint, "Checker endpoint (node name)");
  registry_cmd->add_option("--key", ra.key, "Owner key file");
  registry_cmd->add_option("--directory", ra.directory, "Directory file (verify)");

  ScenarioArgs sa;
  auto* scenario_cmd = app.add_subcommand("scenario", "Run a built-in scenario in the simulator");
  scenario_cmd->add_option("name", sa.name, "hospital, delegation, revocation, timed or ns");
  scenario_cmd->add_option("--config", sa.config, "Run a scenario.toml directory instead");
  scenario_cmd->add_option("--seed", sa.seed, "Deployment seed");
  scenario_cmd->add_option("--depth", sa.depth, "Depth budget");
  scenario_cmd->add_option("--revoke-at", sa.revoke_at, "Revocation: last notRevoked instant");
  scenario_cmd->add_option("--use-at", sa.use_at, "Revocation: instant of the delegated attestation");
  scenario_cmd->add_option("--rounds", sa.rounds, "Needham-Schroeder rounds");
  scenario_cmd->add_flag("--without-ca1", sa.without_ca1, "Delegation: withdraw CA's delegation");
  scenario_cmd->add_option("--sim-config", sa.sim_config, "TOML file with [[fault]] rules");
  scenario_cmd->add_option("--tamper", sa.tamper, "Flip one bit at an evidence site: PATH[@BIT]");
  scenario_cmd->add_option("--out", sa.out, "Directory for transcript, certificates and policies");
  scenario_cmd->add_option("--transport", sa.transport, "sim");
  scenario_cmd->add_flag("--trace", sa.trace, "Record engine steps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*keygen_cmd) return cmd_keygen(kg);
    if (*node_cmd) return cmd_node(na);
    if (*query_cmd) return cmd_query(qa);
    if (*check_cmd) return cmd_check(ca);
    if (*registry_cmd) return cmd_registry(ra);
    if (*scenario_cmd) {
      if (sa.name.empty() && sa.config.empty()) throw Error(ErrorKind::Usage, "scenario name or --config required");
      return cmd_scenario(sa);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kLogical;
  }
  return kUsage;
}
