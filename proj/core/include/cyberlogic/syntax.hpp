#pragma once

#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cyberlogic/digest.hpp"

namespace cyberlogic {

namespace sorts {
inline constexpr const char* Principal = "Principal";
inline constexpr const char* Time = "Time";
inline constexpr const char* Nonce = "Nonce";
inline constexpr const char* Int = "Int";
// Sort of predicate-name arguments to macros such as delegate(K, L, p).
inline constexpr const char* Pred = "$Pred";
}  // namespace sorts

// Well-known principals of the trusted services.
inline constexpr const char* kTimePrincipal = "T";
inline constexpr const char* kNoncePrincipal = "N";

struct Term {
  enum class Kind : std::uint8_t { Var = 1, Const = 2, App = 3 };

  Kind kind = Kind::Const;
  std::string name;
  std::string sort;
  std::vector<Term> args;

  static Term var(std::string name, std::string sort);
  static Term constant(std::string name, std::string sort);
  static Term app(std::string name, std::string sort, std::vector<Term> args);
  static Term integer(long long value, std::string sort = sorts::Int);

  bool is_var() const { return kind == Kind::Var; }
  bool is_const() const { return kind == Kind::Const; }
  bool ground() const;
  bool occurs(const std::string& var) const;
  // Numeric value of an Int/Time literal.
  std::optional<long long> as_integer() const;

  bool operator==(const Term&) const = default;
  std::strong_ordering operator<=>(const Term& o) const;
};

struct Binder {
  std::string name;
  std::string sort;
  bool operator==(const Binder&) const = default;
};

struct Formula {
  enum class Kind : std::uint8_t {
    Top = 1,
    Bottom,
    Atom,
    Attest,
    Knows,
    And,
    Or,
    Implies,
    Forall,
    Exists,
  };

  Kind kind = Kind::Top;
  // Atom: predicate name.
  std::string pred;
  // Atom: arguments. Attest: [principal]. Knows: principal set.
  std::vector<Term> terms;
  // And (n-ary, n >= 2), Or (binary), Implies [antecedent, consequent],
  // Attest/Knows/Forall/Exists [body].
  std::vector<Formula> subs;
  // Forall/Exists binder.
  std::string var;
  std::string sort;
  // Implies: optional hypothesis label for the antecedent.
  std::string label;

  static Formula top();
  static Formula bottom();
  static Formula atom(std::string pred, std::vector<Term> args);
  static Formula attest(Term principal, Formula body);
  static Formula knows(std::vector<Term> principals, Formula body);
  static Formula conj(std::vector<Formula> parts);
  static Formula disj(Formula l, Formula r);
  static Formula implies(Formula antecedent, Formula consequent, std::string label = {});
  static Formula forall(std::string var, std::string sort, Formula body);
  static Formula exists(std::string var, std::string sort, Formula body);
  static Formula negation(Formula f) { return implies(std::move(f), bottom()); }

  bool is(Kind k) const { return kind == k; }
  const Formula& body() const { return subs.back(); }
  const Term& principal() const { return terms.front(); }
  bool is_builtin() const;
  // An atom under zero or more attestations.
  bool is_atomic() const;

  bool operator==(const Formula&) const = default;
};

struct FuncDecl {
  std::vector<std::string> args;
  std::string result;
  bool operator==(const FuncDecl&) const = default;
};

// Sorts, predicates, constants and function symbols in scope for a policy.
struct Signature {
  std::map<std::string, std::vector<std::string>> sorts;  // sort -> direct supersorts
  std::map<std::string, std::vector<std::string>> preds;
  std::map<std::string, std::string> consts;
  std::map<std::string, FuncDecl> funcs;

  // Base signature: Principal, Time, Nonce, Int; T and N; time/nonce predicates.
  static Signature base();

  bool has_sort(const std::string& s) const { return sorts.count(s) > 0; }
  // Reflexive-transitive subsort test.
  bool subsort(const std::string& sub, const std::string& super) const;
  void merge(const Signature& other);

  bool operator==(const Signature&) const = default;
};

struct Clause {
  std::string label;
  std::vector<Binder> universals;
  Formula body = Formula::top();
  Formula head;  // Atom or Attest(K, Atom)

  bool is_fact() const { return body.is(Formula::Kind::Top); }
  // Conjuncts of the body in source order; empty for facts.
  std::vector<Formula> premises() const;
  // Formula view: forall universals. body => head.
  Formula as_formula() const;

  bool operator==(const Clause&) const = default;
};

struct Policy {
  std::string owner;
  Signature sig;
  std::vector<Clause> clauses;
  Digest digest;

  const Clause* find(const std::string& label) const;
  // Recomputes the digest; call after any mutation.
  void rehash();

  bool operator==(const Policy& o) const {
    return owner == o.owner && sig == o.sig && clauses == o.clauses;
  }
};

// Builtin predicates evaluated over ground Int/Time terms (plus =, != on any sort).
bool is_builtin_pred(const std::string& pred);
bool is_service_builtin(const std::string& pred);

std::set<std::string> free_vars(const Formula& f);
std::set<std::string> free_vars(const Term& t);
void collect_vars(const Term& t, std::set<std::string>& out);
std::set<std::string> constants_of(const Formula& f);

Term substitute(const Term& t, const std::string& var, const Term& by);
// Capture-avoiding; throws Error(Sort) when by.sort is not a subsort of the variable's sort
// (checked only when sig is given).
Formula substitute(const Formula& f, const std::string& var, const Term& by,
                   const Signature* sig = nullptr);
// Renames the bound variable of a quantifier to a name not in avoid.
std::string fresh_variant(const std::string& base, const std::set<std::string>& avoid);

std::string print(const Term& t);
std::string print(const Formula& f);
std::string print(const Clause& c);
std::string print(const Policy& p);

}  // namespace cyberlogic
