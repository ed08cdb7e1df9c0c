#pragma once

#include <optional>

#include "cyberlogic/syntax.hpp"

namespace cyberlogic {

// Evaluates a ground builtin atom (=, !=, <, <=, >, >=). Ordering needs integer literals;
// nullopt signals a nonground or ill-sorted instance. Service builtins need a clock value.
std::optional<bool> eval_builtin(const Formula& atom,
                                 std::optional<long long> clock = std::nullopt);

// True when every leaf of f is a builtin atom (under And/Or/Top).
bool pure_builtin(const Formula& f);
bool mentions_service_builtin(const Formula& f);

// Evaluates a ground conjunction/disjunction of builtins.
std::optional<bool> eval_builtin_formula(const Formula& f,
                                         std::optional<long long> clock = std::nullopt);

}  // namespace cyberlogic
