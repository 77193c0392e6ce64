#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stare/types.hpp"

namespace stare {

// Entity-relation composition kinds. rotate treats a d-vector as d/2 complex
// numbers packed half/half (real block then imaginary block). Additive
// (translation-style) composition is a deliberate non-feature; adding a kind
// here plus its forward/backward pair below is the extension point.
enum class PhiKind { Mult, Ccorr, Rotate };

// Relation-qualifier merge kinds. Concat output is 2d wide.
enum class GammaKind { WeightedSum, Concat, Mul };

PhiKind phi_kind_from_string(const std::string& s);
GammaKind gamma_kind_from_string(const std::string& s);
std::string to_string(PhiKind k);
std::string to_string(GammaKind k);

// phi(e, r): Mult = e ⊙ r; Ccorr_k = sum_i e_i r_{(i+k) mod d} (circular
// correlation); Rotate = elementwise complex product in half/half packing.
std::vector<double> phi(const std::vector<double>& e, const std::vector<double>& r,
                        PhiKind kind);

// Gradients of phi w.r.t. both inputs given the upstream gradient.
void phi_backward(const std::vector<double>& e, const std::vector<double>& r,
                  PhiKind kind, const std::vector<double>& upstream,
                  std::vector<double>& grad_e, std::vector<double>& grad_r);

// gamma(h_r, h_q): WeightedSum = alpha*h_r + (1-alpha)*h_q; Concat = [h_r‖h_q];
// Mul = h_r ⊙ h_q. alpha is only consulted for WeightedSum and must be in [0,1].
std::vector<double> gamma(const std::vector<double>& h_r, const std::vector<double>& h_q,
                          GammaKind kind, double alpha);

void gamma_backward(const std::vector<double>& h_r, const std::vector<double>& h_q,
                    GammaKind kind, double alpha, const std::vector<double>& upstream,
                    std::vector<double>& grad_r, std::vector<double>& grad_q);

}  // namespace stare
