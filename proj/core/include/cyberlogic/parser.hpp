#pragma once

#include <string>
#include <string_view>

#include "cyberlogic/syntax.hpp"

namespace cyberlogic {

// Parses a policy file. The result is sort-checked, macro-expanded and normalized into
// labelled clauses; identifiers that are neither bound nor declared become constants of the
// sort their position demands. `base` seeds the signature (e.g. a deployment-wide preamble).
Policy parse_policy(std::string_view text, const std::string& owner,
                    const Signature& base = Signature::base());

// Parses a query. Free identifiers that are not declared constants are variables and the
// goal is existentially closed over them (in order of first occurrence). The result is
// macro-expanded, normalized and checked against the goal fragment.
Formula parse_goal(std::string_view text, const Signature& sig);

// Parses and sort-checks a formula without closing, expanding or normalizing it.
// Free identifiers become free variables.
Formula parse_formula(std::string_view text, const Signature& sig);

}  // namespace cyberlogic
