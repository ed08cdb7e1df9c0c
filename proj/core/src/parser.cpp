#include "cyberlogic/parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <optional>

#include "cyberlogic/error.hpp"
#include "cyberlogic/normalize.hpp"

namespace cyberlogic {

namespace {

// ---------------------------------------------------------------------------
// Lexer

struct Token {
  enum class Type { Ident, Int, String, Punct, End };
  Type type = Type::End;
  std::string text;
  int line = 1;
  int col = 1;
};

bool ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c == '\'' || c >= 0x80; }

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  while (i < src.size()) {
    unsigned char c = static_cast<unsigned char>(src[i]);
    if (std::isspace(c)) {
      advance(1);
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    Token t;
    t.line = line;
    t.col = col;
    if (ident_start(c)) {
      std::size_t j = i;
      while (j < src.size() && ident_char(static_cast<unsigned char>(src[j]))) ++j;
      t.type = Token::Type::Ident;
      t.text = std::string(src.substr(i, j - i));
      advance(j - i);
    } else if (std::isdigit(c) ||
               (c == '-' && i + 1 < src.size() &&
                std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i + 1;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      t.type = Token::Type::Int;
      t.text = std::string(src.substr(i, j - i));
      advance(j - i);
    } else if (c == '"') {
      t.type = Token::Type::String;
      advance(1);
      while (true) {
        if (i >= src.size() || src[i] == '\n')
          throw SyntaxError(t.line, t.col, "unterminated string literal");
        if (src[i] == '"') {
          advance(1);
          break;
        }
        if (src[i] == '\\' && i + 1 < src.size()) advance(1);
        t.text.push_back(src[i]);
        advance(1);
      }
    } else {
      static const char* puncts[] = {"=>", "/\\", "\\/", "!=", "<=", ">=", ".", ",", ":",
                                     "(",  ")",   "{",   "}",  "=",  "<",  ">"};
      bool matched = false;
      for (const char* p : puncts) {
        std::string_view pv(p);
        if (src.substr(i, pv.size()) == pv) {
          t.type = Token::Type::Punct;
          t.text = std::string(pv);
          advance(pv.size());
          matched = true;
          break;
        }
      }
      if (!matched)
        throw SyntaxError(line, col, std::string("unexpected character '") +
                                         static_cast<char>(c) + "'");
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.line = line;
  end.col = col;
  out.push_back(end);
  return out;
}

// ---------------------------------------------------------------------------
// Raw syntax tree with source positions

struct Pos {
  int line = 0;
  int col = 0;
};

struct RawTerm {
  enum class Lit { Ident, Int, String };
  Lit lit = Lit::Ident;
  std::string name;
  std::vector<RawTerm> args;
  bool call = false;
  Pos pos;
};

struct RawFormula {
  enum class K { Top, Bottom, Atom, Rel, Says, Knows, And, Or, Implies, Not, Forall, Exists,
                 Labelled };
  K kind = K::Top;
  RawTerm head;                 // Atom: predicate and args; Says: principal; Rel: lhs
  RawTerm rhs;                  // Rel
  std::string op;               // Rel
  std::vector<RawTerm> set;     // Knows
  std::vector<RawFormula> subs;
  std::string var, sort;        // Forall/Exists
  Pos sort_pos;
  std::string label;            // Implies/Labelled
  Pos pos;
};

bool is_keyword(const std::string& s) {
  return s == "forall" || s == "exists" || s == "not" || s == "true" || s == "false" ||
         s == "knows" || s == "says";
}

bool is_relop(const std::string& s) {
  return s == "=" || s == "!=" || s == "<" || s == "<=" || s == ">" || s == ">=";
}

class Parser {
 public:
  explicit Parser(std::string_view src) : toks_(lex(src)) {}

  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  bool at_end() const { return peek().type == Token::Type::End; }
  Token next() {
    Token t = peek();
    if (pos_ < toks_.size() - 1) ++pos_;
    return t;
  }
  bool is_punct(const char* p, std::size_t ahead = 0) const {
    const Token& t = peek(ahead);
    return t.type == Token::Type::Punct && t.text == p;
  }
  bool is_ident(const char* w, std::size_t ahead = 0) const {
    const Token& t = peek(ahead);
    return t.type == Token::Type::Ident && t.text == w;
  }
  bool accept(const char* p) {
    if (!is_punct(p)) return false;
    next();
    return true;
  }
  [[noreturn]] void fail(const std::string& what) const {
    const Token& t = peek();
    std::string got = t.type == Token::Type::End ? "end of input" : "'" + t.text + "'";
    throw SyntaxError(t.line, t.col, what + ", got " + got);
  }
  void expect(const char* p) {
    if (!accept(p)) fail(std::string("expected '") + p + "'");
  }
  std::string expect_ident(const char* what) {
    if (peek().type != Token::Type::Ident || is_keyword(peek().text)) fail(std::string("expected ") + what);
    return next().text;
  }
  // Identifier or string literal (for constant declarations).
  std::string expect_name() {
    if (peek().type == Token::Type::String) return next().text;
    return expect_ident("name");
  }

  static Pos pos_of(const Token& t) { return Pos{t.line, t.col}; }

  // binders := name (',' name)* ':' sort {',' ...}
  std::vector<std::pair<Binder, Pos>> binders() {
    std::vector<std::pair<Binder, Pos>> out;
    std::size_t pending_from = 0;
    while (true) {
      Pos p = pos_of(peek());
      out.push_back({Binder{expect_ident("variable name"), ""}, {}});
      if (accept(":")) {
        Pos sp = pos_of(peek());
        std::string s = expect_ident("sort name");
        for (std::size_t k = pending_from; k < out.size(); ++k) {
          out[k].first.sort = s;
          out[k].second = sp;
        }
        pending_from = out.size();
      }
      (void)p;
      if (!accept(",")) break;
    }
    if (pending_from != out.size()) fail("expected ':' and a sort for binder");
    return out;
  }

  RawTerm term() {
    const Token& t = peek();
    RawTerm r;
    r.pos = pos_of(t);
    if (t.type == Token::Type::Int) {
      r.lit = RawTerm::Lit::Int;
      r.name = next().text;
      return r;
    }
    if (t.type == Token::Type::String) {
      r.lit = RawTerm::Lit::String;
      r.name = next().text;
      return r;
    }
    r.name = expect_ident("term");
    if (accept("(")) {
      r.call = true;
      if (!accept(")")) {
        do r.args.push_back(term());
        while (accept(","));
        expect(")");
      }
    }
    return r;
  }

  RawFormula formula() { return quant(); }

  RawFormula quant() {
    if (is_ident("forall") || is_ident("exists")) {
      Token kw = next();
      auto bs = binders();
      expect(".");
      RawFormula body = quant();
      for (auto it = bs.rbegin(); it != bs.rend(); ++it) {
        RawFormula q;
        q.kind = kw.text == "forall" ? RawFormula::K::Forall : RawFormula::K::Exists;
        q.var = it->first.name;
        q.sort = it->first.sort;
        q.sort_pos = it->second;
        q.pos = pos_of(kw);
        q.subs.push_back(std::move(body));
        body = std::move(q);
      }
      return body;
    }
    Pos p = pos_of(peek());
    RawFormula lhs = disj();
    if (accept("=>")) {
      RawFormula imp;
      imp.kind = RawFormula::K::Implies;
      imp.pos = p;
      if (lhs.kind == RawFormula::K::Labelled) {
        imp.label = lhs.label;
        imp.subs.push_back(std::move(lhs.subs[0]));
      } else {
        imp.subs.push_back(std::move(lhs));
      }
      imp.subs.push_back(quant());
      return imp;
    }
    if (lhs.kind == RawFormula::K::Labelled)
      throw SyntaxError(p.line, p.col, "labelled hypothesis must be followed by '=>'");
    return lhs;
  }

  RawFormula disj() {
    Pos p = pos_of(peek());
    RawFormula lhs = conj();
    if (!accept("\\/")) return lhs;
    RawFormula f;
    f.kind = RawFormula::K::Or;
    f.pos = p;
    f.subs.push_back(std::move(lhs));
    f.subs.push_back(disj());
    return f;
  }

  RawFormula conj() {
    Pos p = pos_of(peek());
    RawFormula first = unary();
    if (!is_punct("/\\")) return first;
    RawFormula f;
    f.kind = RawFormula::K::And;
    f.pos = p;
    f.subs.push_back(std::move(first));
    while (accept("/\\")) f.subs.push_back(unary());
    return f;
  }

  RawFormula unary() {
    const Token& t = peek();
    RawFormula f;
    f.pos = pos_of(t);
    if (t.type == Token::Type::Ident) {
      if (t.text == "forall" || t.text == "exists") return quant();
      if (t.text == "true") {
        next();
        f.kind = RawFormula::K::Top;
        return f;
      }
      if (t.text == "false") {
        next();
        f.kind = RawFormula::K::Bottom;
        return f;
      }
      if (t.text == "not") {
        next();
        f.kind = RawFormula::K::Not;
        f.subs.push_back(unary());
        return f;
      }
      if (t.text == "knows") {
        next();
        expect("{");
        f.kind = RawFormula::K::Knows;
        if (!accept("}")) {
          do f.set.push_back(term());
          while (accept(","));
          expect("}");
        }
        f.subs.push_back(unary());
        return f;
      }
      if (t.text == "says") fail("expected formula");
    }
    if (accept("(")) {
      if (peek().type == Token::Type::Ident && !is_keyword(peek().text) && is_punct(":", 1)) {
        f.kind = RawFormula::K::Labelled;
        f.label = next().text;
        next();
        f.subs.push_back(formula());
        expect(")");
        return f;
      }
      RawFormula inner = formula();
      expect(")");
      return inner;
    }
    if (t.type != Token::Type::Ident && t.type != Token::Type::Int &&
        t.type != Token::Type::String)
      fail("expected formula");
    RawTerm head = term();
    if (is_ident("says")) {
      next();
      f.kind = RawFormula::K::Says;
      f.head = std::move(head);
      f.subs.push_back(unary());
      return f;
    }
    if (peek().type == Token::Type::Punct && is_relop(peek().text)) {
      f.kind = RawFormula::K::Rel;
      f.op = next().text;
      f.head = std::move(head);
      f.rhs = term();
      return f;
    }
    if (head.lit != RawTerm::Lit::Ident)
      throw SyntaxError(head.pos.line, head.pos.col, "literal is not a formula");
    f.kind = RawFormula::K::Atom;
    f.head = std::move(head);
    return f;
  }

  std::size_t position() const { return pos_; }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Resolution: binds identifiers, assigns and checks sorts

enum class Mode { Policy, Goal };

[[noreturn]] void sort_error(Pos p, const std::string& what) {
  throw Error(ErrorKind::Sort, std::to_string(p.line) + ":" + std::to_string(p.col) + ": " + what);
}

[[noreturn]] void macro_error(Pos p, const std::string& what) {
  throw Error(ErrorKind::UnknownMacro, std::to_string(p.line) + ":" + std::to_string(p.col) + ": " + what);
}

struct MacroShape {
  enum class Arg { Principal, Time, Pred, Atom };
  std::vector<Arg> args;
};

const std::map<std::string, MacroShape>& macro_shapes() {
  using A = MacroShape::Arg;
  static const std::map<std::string, MacroShape> m = {
      {"delegate", {{A::Principal, A::Principal, A::Pred}}},
      {"delegate_indirect", {{A::Principal, A::Principal, A::Pred}}},
      {"revocable_delegate", {{A::Principal, A::Principal, A::Pred}}},
      {"past", {{A::Time}}},
      {"future", {{A::Time}}},
      {"curr", {{A::Time}}},
      {"attest_after", {{A::Principal, A::Time, A::Atom}}},
      {"attest_before", {{A::Principal, A::Time, A::Atom}}},
      {"eventually", {{A::Principal, A::Time, A::Atom}}},
  };
  return m;
}

class Resolver {
 public:
  Resolver(Signature& sig, Mode mode) : sig_(sig), mode_(mode) {}

  Formula formula(const RawFormula& r) {
    using K = RawFormula::K;
    switch (r.kind) {
      case K::Top: return Formula::top();
      case K::Bottom: return Formula::bottom();
      case K::Atom: return atom(r.head);
      case K::Rel: return relation(r);
      case K::Says: {
        Term k = term(r.head, sorts::Principal);
        return Formula::attest(std::move(k), formula(r.subs[0]));
      }
      case K::Knows: {
        std::vector<Term> q;
        for (const auto& t : r.set) q.push_back(term(t, sorts::Principal));
        return Formula::knows(std::move(q), formula(r.subs[0]));
      }
      case K::And: {
        std::vector<Formula> parts;
        for (const auto& s : r.subs) parts.push_back(formula(s));
        return Formula::conj(std::move(parts));
      }
      case K::Or: return Formula::disj(formula(r.subs[0]), formula(r.subs[1]));
      case K::Implies:
        return Formula::implies(formula(r.subs[0]), formula(r.subs[1]), r.label);
      case K::Not: return Formula::negation(formula(r.subs[0]));
      case K::Forall:
      case K::Exists: {
        if (!sig_.has_sort(r.sort)) sort_error(r.sort_pos, "undeclared sort " + r.sort);
        if (sig_.consts.count(r.var))
          sort_error(r.pos, "variable " + r.var + " clashes with constant of the same name");
        scope_.push_back(Binder{r.var, r.sort});
        Formula body = formula(r.subs[0]);
        scope_.pop_back();
        return r.kind == K::Forall ? Formula::forall(r.var, r.sort, std::move(body))
                                   : Formula::exists(r.var, r.sort, std::move(body));
      }
      case K::Labelled: break;
    }
    sort_error(r.pos, "misplaced hypothesis label");
  }

  // Free variables in order of first occurrence (goal mode).
  const std::vector<Binder>& free() const { return free_; }

 private:
  const Binder* bound(const std::string& name) const {
    for (auto it = scope_.rbegin(); it != scope_.rend(); ++it)
      if (it->name == name) return &*it;
    return nullptr;
  }

  const Binder* free_var(const std::string& name) const {
    for (const auto& b : free_)
      if (b.name == name) return &b;
    return nullptr;
  }

  void check(const std::string& actual, const std::string& expected, const RawTerm& t) {
    if (!expected.empty() && !sig_.subsort(actual, expected))
      sort_error(t.pos, t.name + " has sort " + actual + ", expected " + expected);
  }

  bool numeric_sort(const std::string& s) const {
    return sig_.subsort(s, sorts::Int) || sig_.subsort(s, sorts::Time) ||
           sig_.subsort(s, sorts::Nonce);
  }

  // Sort of t when determined without an expectation.
  std::optional<std::string> known_sort(const RawTerm& t) const {
    switch (t.lit) {
      case RawTerm::Lit::Int: return std::nullopt;
      case RawTerm::Lit::String: {
        auto it = sig_.consts.find(t.name);
        if (it != sig_.consts.end()) return it->second;
        return std::nullopt;
      }
      case RawTerm::Lit::Ident: break;
    }
    if (t.call) {
      auto it = sig_.funcs.find(t.name);
      if (it != sig_.funcs.end()) return it->second.result;
      return std::nullopt;
    }
    if (const Binder* b = bound(t.name)) return b->sort;
    if (auto it = sig_.consts.find(t.name); it != sig_.consts.end()) return it->second;
    if (const Binder* b = free_var(t.name)) return b->sort;
    return std::nullopt;
  }

  Term term(const RawTerm& t, const std::string& expected) {
    switch (t.lit) {
      case RawTerm::Lit::Int: {
        std::string s = expected.empty() ? std::string(sorts::Int) : expected;
        if (!numeric_sort(s)) sort_error(t.pos, "integer literal " + t.name + " where " + s + " expected");
        long long v = 0;
        auto [p, ec] = std::from_chars(t.name.data(), t.name.data() + t.name.size(), v);
        if (ec != std::errc()) sort_error(t.pos, "integer literal out of range: " + t.name);
        (void)p;
        return Term::integer(v, s);
      }
      case RawTerm::Lit::String: return constant(t, expected);
      case RawTerm::Lit::Ident: break;
    }
    if (t.call) {
      auto it = sig_.funcs.find(t.name);
      if (it == sig_.funcs.end()) sort_error(t.pos, "undeclared function symbol " + t.name);
      const FuncDecl& fd = it->second;
      if (fd.args.size() != t.args.size())
        sort_error(t.pos, t.name + " expects " + std::to_string(fd.args.size()) + " arguments");
      std::vector<Term> args;
      for (std::size_t i = 0; i < t.args.size(); ++i) args.push_back(term(t.args[i], fd.args[i]));
      check(fd.result, expected, t);
      return Term::app(t.name, fd.result, std::move(args));
    }
    if (const Binder* b = bound(t.name)) {
      check(b->sort, expected, t);
      return Term::var(b->name, b->sort);
    }
    if (sig_.consts.count(t.name) || mode_ == Mode::Policy) return constant(t, expected);
    if (const Binder* b = free_var(t.name)) {
      check(b->sort, expected, t);
      return Term::var(b->name, b->sort);
    }
    if (expected.empty()) sort_error(t.pos, "cannot infer the sort of " + t.name);
    free_.push_back(Binder{t.name, expected});
    return Term::var(t.name, expected);
  }

  Term constant(const RawTerm& t, const std::string& expected) {
    auto it = sig_.consts.find(t.name);
    if (it != sig_.consts.end()) {
      check(it->second, expected, t);
      return Term::constant(t.name, it->second);
    }
    if (expected.empty()) sort_error(t.pos, "cannot infer the sort of " + t.name);
    if (expected == sorts::Pred) sort_error(t.pos, "undeclared predicate " + t.name);
    sig_.consts[t.name] = expected;
    return Term::constant(t.name, expected);
  }

  Formula relation(const RawFormula& r) {
    auto ls = known_sort(r.head);
    auto rs = known_sort(r.rhs);
    bool ordering = r.op != "=" && r.op != "!=";
    std::string fallback;
    if (ls) fallback = *ls;
    else if (rs) fallback = *rs;
    else if (r.head.lit == RawTerm::Lit::Int || r.rhs.lit == RawTerm::Lit::Int) fallback = sorts::Int;
    else sort_error(r.pos, "cannot infer the sort of the operands of " + r.op);
    Term lhs = term(r.head, ls ? std::string() : fallback);
    Term rhs = term(r.rhs, rs ? std::string() : fallback);
    if (!sig_.subsort(lhs.sort, rhs.sort) && !sig_.subsort(rhs.sort, lhs.sort))
      sort_error(r.pos, "operands of " + r.op + " have incompatible sorts " + lhs.sort + " and " +
                            rhs.sort);
    if (ordering) {
      bool ok = (sig_.subsort(lhs.sort, sorts::Int) && sig_.subsort(rhs.sort, sorts::Int)) ||
                (sig_.subsort(lhs.sort, sorts::Time) && sig_.subsort(rhs.sort, sorts::Time));
      if (!ok) sort_error(r.pos, "ordering " + r.op + " needs Int or Time operands");
    }
    return Formula::atom(r.op, {std::move(lhs), std::move(rhs)});
  }

  Formula atom(const RawTerm& t) {
    if (t.lit != RawTerm::Lit::Ident) sort_error(t.pos, "literal is not a formula");
    auto mit = macro_shapes().find(t.name);
    if (mit != macro_shapes().end()) return macro(t, mit->second);
    std::vector<std::string> arg_sorts;
    if (is_service_builtin(t.name)) {
      arg_sorts = {sorts::Time};
    } else {
      auto it = sig_.preds.find(t.name);
      if (it == sig_.preds.end()) sort_error(t.pos, "undeclared predicate " + t.name);
      arg_sorts = it->second;
    }
    if (arg_sorts.size() != t.args.size())
      sort_error(t.pos, t.name + " expects " + std::to_string(arg_sorts.size()) + " arguments");
    std::vector<Term> args;
    for (std::size_t i = 0; i < t.args.size(); ++i) args.push_back(term(t.args[i], arg_sorts[i]));
    return Formula::atom(t.name, std::move(args));
  }

  Formula macro(const RawTerm& t, const MacroShape& shape) {
    using A = MacroShape::Arg;
    if (shape.args.size() != t.args.size())
      macro_error(t.pos, "macro " + t.name + " expects " + std::to_string(shape.args.size()) +
                            " arguments");
    std::vector<Term> args;
    for (std::size_t i = 0; i < t.args.size(); ++i) {
      const RawTerm& a = t.args[i];
      switch (shape.args[i]) {
        case A::Principal: args.push_back(term(a, sorts::Principal)); break;
        case A::Time: args.push_back(term(a, sorts::Time)); break;
        case A::Pred:
          if (a.lit != RawTerm::Lit::Ident || a.call || !sig_.preds.count(a.name))
            macro_error(a.pos, "macro " + t.name + " over undeclared predicate " + a.name);
          args.push_back(Term::constant(a.name, sorts::Pred));
          break;
        case A::Atom: {
          Formula inner = atom(a);
          if (inner.is_builtin()) macro_error(a.pos, "macro " + t.name + " needs a predicate atom");
          args.push_back(Term::app(inner.pred, "$Atom", inner.terms));
          break;
        }
      }
    }
    return Formula::atom(t.name, std::move(args));
  }

  Signature& sig_;
  Mode mode_;
  std::vector<Binder> scope_;
  std::vector<Binder> free_;
};

// ---------------------------------------------------------------------------
// Declarations

bool is_decl_keyword(const std::string& s) {
  return s == "sort" || s == "pred" || s == "principal" || s == "const" || s == "func";
}

void declare_const(Signature& sig, const std::string& name, const std::string& sort, Pos p) {
  auto it = sig.consts.find(name);
  if (it != sig.consts.end() && it->second != sort)
    sort_error(p, "constant " + name + " redeclared with sort " + sort + " (was " + it->second + ")");
  sig.consts[name] = sort;
}

void require_sort(const Signature& sig, const std::string& s, Pos p) {
  if (!sig.has_sort(s)) sort_error(p, "undeclared sort " + s);
}

void parse_decl(Parser& ps, Signature& sig) {
  Token kw = ps.next();
  Pos kp{kw.line, kw.col};
  if (kw.text == "sort") {
    std::string name = ps.expect_ident("sort name");
    std::vector<std::pair<std::string, Pos>> parents;
    if (ps.accept("<")) {
      do {
        Pos p = Parser::pos_of(ps.peek());
        parents.push_back({ps.expect_ident("sort name"), p});
      } while (ps.accept(","));
    }
    ps.expect(".");
    auto& entry = sig.sorts[name];
    for (const auto& [parent, p] : parents) {
      require_sort(sig, parent, p);
      if (sig.subsort(parent, name)) sort_error(p, "cyclic subsort " + name + " < " + parent);
      if (std::find(entry.begin(), entry.end(), parent) == entry.end()) entry.push_back(parent);
    }
    return;
  }
  if (kw.text == "pred") {
    std::string name = ps.expect_ident("predicate name");
    if (is_builtin_pred(name) || is_macro(name))
      sort_error(kp, "predicate name " + name + " is reserved");
    std::vector<std::string> args;
    if (ps.accept("(")) {
      if (!ps.accept(")")) {
        do {
          Pos p = Parser::pos_of(ps.peek());
          std::string s = ps.expect_ident("sort name");
          require_sort(sig, s, p);
          args.push_back(s);
        } while (ps.accept(","));
        ps.expect(")");
      }
    }
    ps.expect(".");
    auto it = sig.preds.find(name);
    if (it != sig.preds.end() && it->second != args)
      sort_error(kp, "predicate " + name + " redeclared with a different signature");
    sig.preds[name] = args;
    return;
  }
  if (kw.text == "principal") {
    do {
      Pos p = Parser::pos_of(ps.peek());
      declare_const(sig, ps.expect_name(), sorts::Principal, p);
    } while (ps.accept(","));
    ps.expect(".");
    return;
  }
  if (kw.text == "const") {
    std::vector<std::pair<std::string, Pos>> names;
    do {
      Pos p = Parser::pos_of(ps.peek());
      names.push_back({ps.expect_name(), p});
    } while (ps.accept(","));
    ps.expect(":");
    Pos sp = Parser::pos_of(ps.peek());
    std::string sort = ps.expect_ident("sort name");
    require_sort(sig, sort, sp);
    ps.expect(".");
    for (const auto& [n, p] : names) declare_const(sig, n, sort, p);
    return;
  }
  // func
  std::string name = ps.expect_ident("function name");
  FuncDecl fd;
  ps.expect("(");
  if (!ps.accept(")")) {
    do {
      Pos p = Parser::pos_of(ps.peek());
      std::string s = ps.expect_ident("sort name");
      require_sort(sig, s, p);
      fd.args.push_back(s);
    } while (ps.accept(","));
    ps.expect(")");
  }
  ps.expect(":");
  Pos rp = Parser::pos_of(ps.peek());
  fd.result = ps.expect_ident("sort name");
  require_sort(sig, fd.result, rp);
  ps.expect(".");
  auto it = sig.funcs.find(name);
  if (it != sig.funcs.end() && !(it->second == fd))
    sort_error(kp, "function " + name + " redeclared with a different signature");
  sig.funcs[name] = fd;
}

struct RawClause {
  std::string label;
  Pos pos;
  RawFormula body;
};

Formula close_existentially(Formula f, const std::vector<Binder>& free) {
  for (auto it = free.rbegin(); it != free.rend(); ++it)
    f = Formula::exists(it->name, it->sort, std::move(f));
  return f;
}

}  // namespace

Policy parse_policy(std::string_view text, const std::string& owner, const Signature& base) {
  Parser ps(text);
  Policy policy;
  policy.owner = owner;
  policy.sig = base;
  policy.sig.merge(Signature::base());

  // Declarations are collected first so that clauses may precede them.
  std::vector<RawClause> raw;
  while (!ps.at_end()) {
    const Token& t = ps.peek();
    if (t.type == Token::Type::Ident && is_decl_keyword(t.text) && !ps.is_punct(":", 1)) {
      parse_decl(ps, policy.sig);
      continue;
    }
    if (t.type != Token::Type::Ident || is_keyword(t.text) || !ps.is_punct(":", 1))
      ps.fail("expected declaration or labelled clause");
    RawClause rc;
    rc.pos = Parser::pos_of(t);
    rc.label = ps.next().text;
    ps.next();
    rc.body = ps.formula();
    ps.expect(".");
    raw.push_back(std::move(rc));
  }

  std::set<std::string> labels;
  for (const auto& rc : raw) {
    Resolver res(policy.sig, Mode::Policy);
    Formula f = res.formula(rc.body);
    f = expand_macros(f, policy.sig);
    f = normalize(f, Role::Program);
    declare_derived_preds(f, policy.sig);
    std::vector<Clause> cs = to_clauses(f, rc.label);
    for (auto& c : cs) {
      if (!labels.insert(c.label).second)
        throw Error(ErrorKind::DuplicateLabel, std::to_string(rc.pos.line) + ":" +
                                                   std::to_string(rc.pos.col) +
                                                   ": duplicate label " + c.label);
      policy.clauses.push_back(std::move(c));
    }
  }
  policy.rehash();
  return policy;
}

Formula parse_formula(std::string_view text, const Signature& sig) {
  Parser ps(text);
  Signature local = sig;
  local.merge(Signature::base());
  RawFormula raw = ps.formula();
  if (!ps.at_end()) ps.fail("expected end of formula");
  Resolver res(local, Mode::Goal);
  return res.formula(raw);
}

Formula parse_goal(std::string_view text, const Signature& sig) {
  Parser ps(text);
  Signature local = sig;
  local.merge(Signature::base());
  RawFormula raw = ps.formula();
  ps.accept(".");
  if (!ps.at_end()) ps.fail("expected end of query");
  Resolver res(local, Mode::Goal);
  Formula f = close_existentially(res.formula(raw), res.free());
  f = expand_macros(f, local);
  f = normalize(f, Role::Goal);
  check_goal(f);
  return f;
}

bool is_macro(const std::string& name) { return macro_shapes().count(name) > 0; }

}  // namespace cyberlogic
