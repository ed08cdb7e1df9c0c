#pragma once

#include <map>
#include <string>
#include <vector>

#include "cyberlogic/syntax.hpp"

namespace cyberlogic {

// Program formulas become clause sets (D); goal formulas are searched (G). Implication
// antecedents flip the role.
enum class Role { Program, Goal };

// Rewrites to a fixpoint: attestation distributes over conjunction and quantifiers, absorbs
// itself, and (in program role) moves past implication into the clause head. In goal role it
// also distributes over disjunction and drops off builtins. Throws NotInFragment for an
// attested implication in goal position that is not a delegation grant.
Formula normalize(const Formula& f, Role role);

// Splits a normalized program formula into clauses. The first clause keeps `label`, later
// ones get `label_2`, `label_3`, ...; reified delegation facts get `label_grant`.
std::vector<Clause> to_clauses(const Formula& program, const std::string& label);

// Throws NotInFragment unless g is a normalized goal of the fragment.
void check_goal(const Formula& g);
bool is_goal(const Formula& g);

bool is_macro(const std::string& name);

// Expands delegation and temporal macros. Reified predicates that expansions introduce
// (delegated_p, stamped_p) are declared in sig.
Formula expand_macros(const Formula& f, Signature& sig);
// As above against a table of declared predicates (name -> argument sorts); throws
// UnknownMacro on atoms over predicates that are neither declared, builtin, nor macros.
Formula expand_macros(const Formula& f,
                      const std::map<std::string, std::vector<std::string>>& predicates);

// Declares the reified predicates (delegated_p, stamped_p) that appear in f.
void declare_derived_preds(const Formula& f, Signature& sig);

// Reified predicate names.
std::string delegated_pred(const std::string& pred);
std::string stamped_pred(const std::string& pred);

}  // namespace cyberlogic
