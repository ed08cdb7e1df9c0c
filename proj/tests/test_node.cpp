#include "doctest.h"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sodium.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>

#include "cyberlogic/codec.hpp"
#include "cyberlogic/error.hpp"
#include "cyberlogic/node.hpp"
#include "harness.hpp"

using namespace cyberlogic;

namespace {

std::unique_ptr<Deployment> hospital(SimConfig sim = {}) {
  return testing::deploy(scenario_files("hospital"), {"A", "B", "C"}, {}, 1, std::move(sim));
}

Message query(const std::string& from, const std::string& to, Formula goal) {
  Message m;
  m.type = MsgType::Query;
  m.qid = from + "-q1";
  m.from = from;
  m.to = to;
  m.goal = std::move(goal);
  m.budget = 16;
  return m;
}

bool has_line(const std::vector<std::string>& lines, const std::string& needle) {
  return std::any_of(lines.begin(), lines.end(), [&](const std::string& l) { return l.find(needle) != std::string::npos; });
}

FaultRule rule(FaultRule::Kind kind, const std::string& type, const std::string& contains) {
  FaultRule r;
  r.kind = kind;
  r.type = type;
  r.contains = contains;
  return r;
}

}  // namespace

TEST_SUITE("wire") {
  TEST_CASE("json frames round trip") {
    Message m = query("A", "B", Formula::attest(Term::constant("B", sorts::Principal), Formula::atom("p", {Term::integer(1)})));
    m.session = {"00ff", "abcd"};
    m.vars = {"X:Principal"};
    Message back = from_json(to_json(m));
    CHECK(back == m);

    Message a;
    a.type = MsgType::Answer;
    a.qid = "q";
    a.from = "B";
    a.to = "A";
    a.subst = Substitution{{"X", Term::constant("B", sorts::Principal)}};
    a.cert = Bytes{1, 2, 3};
    CHECK(from_json(to_json(a)) == a);

    std::string line = to_json(m);
    CHECK(line.find('\n') == std::string::npos);
    CHECK(line.find("\"goal_b64\"") != std::string::npos);
  }

  TEST_CASE("malformed frames are decode errors") {
    std::string good = to_json(query("A", "B", Formula::top()));
    for (std::string bad : {std::string("{"), std::string("[]"), std::string("{\"type\":\"NOPE\"}"),
                            good.substr(0, good.size() - 1) + ",\"extra\":1}",
                            std::string("{\"type\":\"QUERY\",\"qid\":\"q\",\"from\":\"A\",\"to\":\"B\",\"session\":[],"
                                        "\"goal_b64\":\"!!\",\"vars\":[],\"budget\":1}")}) {
      CAPTURE(bad);
      try {
        from_json(bad);
        FAIL("accepted");
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Decode);
      }
    }
    CHECK_THROWS_AS(from_json(std::string(kMaxFrame + 1, ' ')), Error);
  }

  TEST_CASE("fail reasons") {
    for (Status s : {Status::DepthExhausted, Status::NoRoute, Status::Flounder, Status::Failure})
      CHECK(status_from_reason(fail_reason(s)) == s);
    CHECK(fail_reason(Status::Failure) == "no-answer");
    CHECK(status_from_reason("no-answer: self-check failed") == Status::Failure);
  }

  TEST_CASE("message type names") {
    for (MsgType t : {MsgType::Query, MsgType::Broadcast, MsgType::Answer, MsgType::Fail, MsgType::Ping, MsgType::Pong,
                      MsgType::CheckReq, MsgType::CheckResp, MsgType::TimeReq, MsgType::TimeResp, MsgType::NonceReq,
                      MsgType::NonceResp, MsgType::Error})
      CHECK(msg_type_from_string(to_string(t)) == t);
    CHECK(to_string(MsgType::CheckReq) == "CHECK_REQ");
  }
}

TEST_SUITE("node") {
  TEST_CASE("hospital answers across three nodes") {
    auto d = hospital();
    testing::Submitted s = testing::submit(*d, "A", "A says readMedRec(Alice, Peter)");
    REQUIRE(s.result.ok());
    CHECK_MESSAGE(s.check.ok, s.check.path << ": " << s.check.reason);
    CHECK(d->node("A").metrics().queries_out > 0);
    CHECK(d->node("B").metrics().queries_in > 0);
    CHECK(d->node("B").metrics().answers > 0);
    CHECK(has_line(d->sim().transcript(), "\"to\":\"B\""));
  }

  TEST_CASE("a targeted query is answered from the peer's facts") {
    auto d = hospital();
    Formula g = d->parse_query("B says isPhysicianOf(Alice, Peter)");
    testing::Submitted s = testing::submit(*d, "A", "B says isPhysicianOf(Alice, Peter)");
    REQUIRE(s.result.ok());
    CHECK(s.check.ok);
    CHECK(render_spine(s.result.answers[0].evidence).find("b3") != std::string::npos);
    (void)g;
  }

  TEST_CASE("a node without clauses fails every query") {
    auto d = testing::deploy({{"preamble.cl", "principal E, G. pred p(Int).\n"}}, {"G", "E"});
    Message r = d->node("E").handle(query("G", "E", d->parse_query("E says p(1)")));
    CHECK(r.type == MsgType::Fail);
    CHECK(status_from_reason(r.reason) == Status::Failure);
    CHECK(d->node("E").metrics().fails == 1);
  }

  TEST_CASE("unknown principals have no route") {
    auto d = hospital();
    Message m = query("A", "Z", Formula::top());
    auto r = d->sim().request(m);
    REQUIRE(r);
    CHECK(r->type == MsgType::Fail);
    CHECK(status_from_reason(r->reason) == Status::NoRoute);
  }

  TEST_CASE("ping and unexpected messages") {
    auto d = hospital();
    Message ping;
    ping.type = MsgType::Ping;
    ping.qid = "p";
    ping.from = "A";
    ping.to = "B";
    CHECK(d->node("B").handle(ping).type == MsgType::Pong);
    Message stray = ping;
    stray.type = MsgType::Answer;
    Message r = d->node("B").handle(stray);
    CHECK((r.type == MsgType::Error || r.type == MsgType::Fail));
  }

  TEST_CASE("simulator transcripts are deterministic") {
    auto run = [] {
      auto d = hospital();
      testing::submit(*d, "A", "A says readMedRec(Alice, Peter)");
      return d->sim().transcript();
    };
    CHECK(run() == run());
  }

  TEST_CASE("duplicate answers are ignored") {
    SimConfig sim;
    sim.faults.push_back(rule(FaultRule::Kind::Duplicate, "ANSWER", ""));
    auto d = hospital(sim);
    testing::Submitted s = testing::submit(*d, "A", "A says readMedRec(Alice, Peter)");
    REQUIRE(s.result.ok());
    CHECK(s.check.ok);
    d->sim().flush_duplicates();
    std::size_t ignored = 0;
    for (const char* n : {"A", "B", "C"}) ignored += d->node(n).metrics().duplicates_ignored;
    CHECK(ignored > 0);
    CHECK(has_line(d->sim().transcript(), " DUP "));
  }

  TEST_CASE("a delayed reply past the timeout is a timeout") {
    SimConfig sim;
    FaultRule slow = rule(FaultRule::Kind::Delay, "QUERY", "isPhysicianOf");
    slow.delay_ms = 10'000;
    sim.faults.push_back(slow);
    auto d = hospital(sim);
    testing::Submitted s = testing::submit(*d, "A", "A says readMedRec(Alice, Peter)");
    CHECK_FALSE(s.result.ok());
    CHECK(has_line(d->sim().transcript(), " TIMEOUT "));
  }

  TEST_CASE("updated policies keep their history") {
    auto d = hospital();
    Policy p = *d->node("B").policy();
    Digest old = p.digest;
    p.clauses.pop_back();
    p.rehash();
    d->node("B").update_policy(p);
    CHECK(d->node("B").policy()->digest == p.digest);
    auto hist = d->node("B").policy_history();
    REQUIRE(hist.size() == 2);
    CHECK(hist[0]->digest == old);
  }

  TEST_CASE("a key that does not match the directory is refused") {
    auto [kp, id] = derive_keypair(1, "A");
    auto [other, oid] = derive_keypair(2, "A");
    NodeConfig cfg;
    cfg.key = other;
    cfg.id = id;
    cfg.policy.owner = "A";
    cfg.policy.rehash();
    cfg.directory.add(DirectoryEntry{id, kp.public_key, ""});
    CHECK_THROWS_AS(Node{cfg}, Error);
  }

  TEST_CASE("certificates survive a restart with the same keys") {
    Certificate c;
    {
      auto d = hospital();
      testing::Submitted s = testing::submit(*d, "A", "A says readMedRec(Alice, Peter)");
      REQUIRE(s.cert);
      c = *s.cert;
    }
    auto again = hospital();
    CHECK(check_certificate(again->local_context(), c).ok);
    CHECK(verify_seal(c, again->directory()));
  }
}

TEST_SUITE("sessions") {
  TEST_CASE("the round succeeds and is answered by hypothesis") {
    ScenarioResult r = run_scenario("ns");
    REQUIRE(r.ok);
    std::string spine = render_spine(r.certificate->root);
    CHECK(spine.find("h_b") != std::string::npos);
    CHECK(spine.find("h_a") != std::string::npos);
  }

  TEST_CASE("a callback without the session token fails") {
    ScenarioOptions opts;
    opts.faults.push_back(rule(FaultRule::Kind::StripSession, "QUERY", "msg3"));
    ScenarioResult r = run_scenario("ns", opts);
    CHECK_FALSE(r.ok);
    CHECK_FALSE(r.certificate);
  }

  TEST_CASE("a callback with a forged token fails") {
    ScenarioOptions opts;
    opts.faults.push_back(rule(FaultRule::Kind::ForgeSession, "QUERY", "msg3"));
    ScenarioResult r = run_scenario("ns", opts);
    CHECK_FALSE(r.ok);
  }

  TEST_CASE("a dropped second message leaves A without a certificate") {
    ScenarioOptions opts;
    opts.faults.push_back(rule(FaultRule::Kind::Drop, "QUERY", "msg2"));
    ScenarioResult r = run_scenario("ns", opts);
    CHECK_FALSE(r.ok);
    CHECK_FALSE(r.certificate);
    CHECK(has_line(r.transcript, " DROP "));
    REQUIRE_FALSE(r.queries.empty());
    CHECK(r.queries[0].result.status == Status::Failure);
  }

  TEST_CASE("probing B with other token chains never reaches h_b") {
    auto spec = scenario_spec("ns", {});
    Deployment d(spec.first);
    Formula round = d.parse_query(spec.second.array("query").at(0).str("goal"));
    REQUIRE(d.node("A").submit(round).ok());
    Formula probe = d.parse_query("exists n:Nonce. B says msg3(n)");
    for (const auto& chain : std::vector<SessionChain>{{}, {"00"}, d.node("A").session_tokens()}) {
      Message m = query("A", "B", probe);
      m.session = chain;
      Message r = d.node("B").handle(m);
      CHECK(r.type == MsgType::Fail);
    }
  }
}

TEST_SUITE("tcp") {
  struct Pair {
    KeyDirectory dir;
    std::unique_ptr<Node> k, l;
    std::unique_ptr<TcpServer> server;
    std::unique_ptr<TcpTransport> out;

    Pair() {
      PolicySet ps = PolicySet::from_sources({
          {"preamble.cl", "principal K, L. pred p(Int). pred q(Int).\n"},
          {"K.cl", "k: L says q(1) => K says p(1).\n"},
          {"L.cl", "l: L says q(1).\n"},
      });
      auto [kk, ki] = derive_keypair(5, "K");
      auto [lk, li] = derive_keypair(5, "L");
      dir.add(DirectoryEntry{ki, kk.public_key, ""});
      dir.add(DirectoryEntry{li, lk.public_key, ""});
      NodeConfig lc{lk, li, ps.policies.at("L")};
      lc.directory = dir;
      l = std::make_unique<Node>(lc);
      server = std::make_unique<TcpServer>(*l, "127.0.0.1", 0);
      server->start();
      out = std::make_unique<TcpTransport>(kk, ki, dir, 3'000);
      out->set_address("L", "127.0.0.1:" + std::to_string(server->port()));
      NodeConfig kc{kk, ki, ps.policies.at("K")};
      kc.directory = dir;
      k = std::make_unique<Node>(kc, out.get());
      policies = ps;
    }
    ~Pair() { server->stop(); }
    PolicySet policies;
  };

  TEST_CASE("query and answer over an encrypted channel") {
    Pair p;
    Formula g = Formula::attest(Term::constant("K", sorts::Principal), Formula::atom("p", {Term::integer(1)}));
    SolveResult r = p.k->submit(g);
    REQUIRE(r.ok());
    Certificate c = p.k->certify(g, r.answers[0]);
    CheckContext ctx;
    p.policies.add_to(ctx);
    ctx.keys = &p.dir;
    CHECK(check_certificate(ctx, c).ok);
    CHECK(p.server->protocol_errors() == 0);
  }

  TEST_CASE("misaddressed frames get an error reply") {
    Pair p;
    Message m;
    m.type = MsgType::Ping;
    m.qid = "x";
    m.from = "K";
    m.to = "M";
    p.out->set_address("M", "127.0.0.1:" + std::to_string(p.server->port()));
    auto r = p.out->request(m);
    CHECK((!r || r->type == MsgType::Error || r->type == MsgType::Fail));
    Message ok = m;
    ok.to = "L";
    auto pong = p.out->request(ok);
    REQUIRE(pong);
    CHECK(pong->type == MsgType::Pong);
  }

  TEST_CASE("malformed frames keep the connection") {
    Pair p;
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    REQUIRE(fd >= 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(p.server->port());
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
    timeval tv{3, 0};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);

    auto [ck, cid] = derive_keypair(5, "Client");
    std::string hello = "HELLO Client " + to_hex(ck.public_key) + "\n";
    ::send(fd, hello.data(), hello.size(), 0);
    std::string buf;
    auto read_line = [&]() {
      for (;;) {
        auto nl = buf.find('\n');
        if (nl != std::string::npos) {
          std::string line = buf.substr(0, nl);
          buf.erase(0, nl + 1);
          return line;
        }
        char tmp[4096];
        ssize_t n = ::recv(fd, tmp, sizeof tmp, 0);
        if (n <= 0) return std::string();
        buf.append(tmp, static_cast<std::size_t>(n));
      }
    };
    std::string server_hello = read_line();
    REQUIRE(server_hello.rfind("HELLO L ", 0) == 0);

    unsigned char ckey[crypto_box_BEFORENMBYTES], csk[crypto_box_SECRETKEYBYTES], spk[crypto_box_PUBLICKEYBYTES];
    REQUIRE(sodium_init() >= 0);
    REQUIRE(crypto_sign_ed25519_sk_to_curve25519(csk, ck.secret_key.data()) == 0);
    REQUIRE(crypto_sign_ed25519_pk_to_curve25519(spk, p.dir.find("L")->public_key.data()) == 0);
    REQUIRE(crypto_box_beforenm(ckey, spk, csk) == 0);
    auto open = [&](const std::string& line) {
      Bytes in = from_base64(line);
      REQUIRE(in.size() > crypto_box_NONCEBYTES + crypto_box_MACBYTES);
      std::string plain(in.size() - crypto_box_NONCEBYTES - crypto_box_MACBYTES, '\0');
      REQUIRE(crypto_box_open_easy_afternm(reinterpret_cast<unsigned char*>(plain.data()), in.data() + crypto_box_NONCEBYTES,
                                           in.size() - crypto_box_NONCEBYTES, in.data(), ckey) == 0);
      return from_json(plain);
    };
    auto seal = [&](const std::string& plain) {
      Bytes out(crypto_box_NONCEBYTES + crypto_box_MACBYTES + plain.size());
      randombytes_buf(out.data(), crypto_box_NONCEBYTES);
      crypto_box_easy_afternm(out.data() + crypto_box_NONCEBYTES, reinterpret_cast<const unsigned char*>(plain.data()),
                              plain.size(), out.data(), ckey);
      return to_base64(out) + "\n";
    };

    for (std::string garbage : {std::string("not a frame\n"), seal("{\"type\":"), seal("{\"type\":\"PING\"}")}) {
      ::send(fd, garbage.data(), garbage.size(), 0);
      Message reply = open(read_line());
      CHECK(reply.type == MsgType::Error);
      CHECK(reply.reason.rfind("protocol", 0) == 0);
    }
    Message ping;
    ping.type = MsgType::Ping;
    ping.qid = "c1";
    ping.from = "Client";
    ping.to = "L";
    std::string frame = seal(to_json(ping));
    ::send(fd, frame.data(), frame.size(), 0);
    CHECK(open(read_line()).type == MsgType::Pong);
    ::close(fd);
    CHECK(p.server->protocol_errors() == 3);
  }

  TEST_CASE("addresses") {
    auto [host, port] = parse_address("127.0.0.1:8080");
    CHECK(host == "127.0.0.1");
    CHECK(port == 8080);
    CHECK_THROWS_AS(parse_address("nohost"), Error);
    CHECK_THROWS_AS(parse_address("h:99999"), Error);
  }
}

TEST_SUITE("remote checking") {
  TEST_CASE("verdicts agree with the local checker") {
    auto d = hospital();
    testing::Submitted s = testing::submit(*d, "A", "A says readMedRec(Alice, Peter)");
    REQUIRE(s.cert);
    std::vector<std::unique_ptr<RemoteChecker>> owned;
    CheckContext remote = d->remote_context("C", owned);
    CheckResult r = check_certificate(remote, *s.cert);
    CHECK_MESSAGE(r.ok, r.path << ": " << r.reason);
    CHECK(has_line(d->sim().transcript(), "CHECK_REQ"));

    Certificate bad = *s.cert;
    REQUIRE(tamper(bad, "/0@0"));
    CheckResult local_bad = check_certificate(d->local_context(), bad);
    CheckResult remote_bad = check_certificate(remote, bad);
    CHECK_FALSE(local_bad.ok);
    CHECK_FALSE(remote_bad.ok);
  }

  TEST_CASE("verdicts are signed by the policy owner") {
    auto d = hospital();
    testing::Submitted s = testing::submit(*d, "A", "A says readMedRec(Alice, Peter)");
    REQUIRE(s.cert);
    Digest a = d->node("A").policy()->digest;
    Verdict v = remote_check(d->sim(), d->registry(), d->directory(), "C", a, s.cert->root, s.cert->root_formula);
    CHECK(v.ok);
    REQUIRE(v.signature);
    CHECK(v.signature->principal.name == "A");
    CHECK(verify_attestation(d->directory().find("A")->public_key, *v.signature));
    CHECK_THROWS_AS(remote_check(d->sim(), d->registry(), d->directory(), "C", Digest::of(to_bytes("none")),
                                 s.cert->root, s.cert->root_formula),
                    Error);
  }
}
