#pragma once

// Mod-2 Morse chain complexes, homology ranks and continuation maps.

#include "json.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace cotmorse {

// Dense matrix over GF(2), rows packed into 64-bit words.
class BitMatrix {
public:
  BitMatrix() = default;
  BitMatrix(int rows, int cols);

  static BitMatrix identity(int n);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool get(int r, int c) const;
  void set(int r, int c, bool v);

  int rank() const;
  bool is_zero() const;
  BitMatrix operator*(const BitMatrix& o) const;
  BitMatrix operator+(const BitMatrix& o) const;
  bool operator==(const BitMatrix& o) const = default;

  // Row strings of '0'/'1'.
  std::vector<std::string> to_strings() const;

private:
  int rows_ = 0;
  int cols_ = 0;
  int words_ = 0;
  std::vector<std::uint64_t> bits_;
};

struct Generator {
  std::string id;
  double action = 0.0;
  int degree = 0;
};

// Raw number of connections from `from` to `to` (only the parity enters).
struct ConnectionCount {
  std::string from;
  std::string to;
  int count = 0;
};

class ComplexError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ChainComplex {
  std::map<int, std::vector<Generator>> generators;  // per degree, ascending action
  std::map<int, BitMatrix> boundary;                 // degree k: C_k -> C_{k-1}
  nlohmann::json provenance;

  int dimension(int k) const;
  const BitMatrix* boundary_at(int k) const;
  int position(int k, const std::string& id) const;  // -1 if absent
};

// Throws ComplexError listing the pair if a gap-one count is missing, or
// naming the degree and the offending (from, to) entry if d^2 != 0.
ChainComplex build_complex(const std::vector<Generator>& generators, const std::vector<ConnectionCount>& counts);

// Checks d_{k-1} d_k = 0 for all k; throws ComplexError with the first offending entry.
void verify_boundary_squared(const ChainComplex& cx);

std::map<int, int> homology_ranks(const ChainComplex& cx);

struct ContinuationMap {
  std::map<int, BitMatrix> maps;  // degree k: C_k(P0) -> C_k(P1), action-sorted bases
};

// Assembles Psi from hybrid counts between equal-degree generators and
// verifies the chain-map identity exactly; throws ComplexError naming the
// offending entry otherwise.
ContinuationMap build_continuation(const ChainComplex& source, const ChainComplex& target,
                                   const std::vector<ConnectionCount>& counts);

void verify_chain_map(const ChainComplex& source, const ChainComplex& target, const ContinuationMap& psi);

// Square, zero below the diagonal, ones on it.
bool is_upper_unitriangular(const BitMatrix& m);

// Inverse of an upper unitriangular matrix by back substitution, one basis
// vector at a time in increasing action.
BitMatrix unitriangular_inverse(const BitMatrix& m);

ContinuationMap inverse(const ContinuationMap& psi);

// Rank of the map induced on homology in each degree.
std::map<int, int> induced_homology_rank(const ChainComplex& source, const ChainComplex& target,
                                         const ContinuationMap& psi);

// Cone profile phi(r) = 2r^3 - 3r^2 + 1 and its derivative.
double cone_profile(double r);
double cone_profile_derivative(double r);

void to_json(nlohmann::json& j, const ChainComplex& cx);
void to_json(nlohmann::json& j, const ContinuationMap& psi);

}  // namespace cotmorse
