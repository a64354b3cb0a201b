#include "cotmorse/complex.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace cotmorse {

BitMatrix::BitMatrix(int rows, int cols)
    : rows_(rows), cols_(cols), words_((cols + 63) / 64), bits_(static_cast<std::size_t>(rows) * ((cols + 63) / 64), 0) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("BitMatrix: negative size");
}

BitMatrix BitMatrix::identity(int n) {
  BitMatrix m(n, n);
  for (int i = 0; i < n; ++i) m.set(i, i, true);
  return m;
}

bool BitMatrix::get(int r, int c) const {
  return (bits_[static_cast<std::size_t>(r * words_ + c / 64)] >> (c % 64)) & 1u;
}

void BitMatrix::set(int r, int c, bool v) {
  auto& w = bits_[static_cast<std::size_t>(r * words_ + c / 64)];
  const std::uint64_t mask = std::uint64_t{1} << (c % 64);
  w = v ? (w | mask) : (w & ~mask);
}

int BitMatrix::rank() const {
  std::vector<std::uint64_t> a = bits_;
  int rank = 0;
  for (int c = 0; c < cols_ && rank < rows_; ++c) {
    const int w = c / 64;
    const std::uint64_t mask = std::uint64_t{1} << (c % 64);
    int pivot = -1;
    for (int r = rank; r < rows_; ++r)
      if (a[static_cast<std::size_t>(r * words_ + w)] & mask) {
        pivot = r;
        break;
      }
    if (pivot < 0) continue;
    if (pivot != rank)
      for (int k = 0; k < words_; ++k)
        std::swap(a[static_cast<std::size_t>(pivot * words_ + k)], a[static_cast<std::size_t>(rank * words_ + k)]);
    for (int r = 0; r < rows_; ++r)
      if (r != rank && (a[static_cast<std::size_t>(r * words_ + w)] & mask))
        for (int k = 0; k < words_; ++k)
          a[static_cast<std::size_t>(r * words_ + k)] ^= a[static_cast<std::size_t>(rank * words_ + k)];
    ++rank;
  }
  return rank;
}

bool BitMatrix::is_zero() const {
  return std::all_of(bits_.begin(), bits_.end(), [](std::uint64_t w) { return w == 0; });
}

BitMatrix BitMatrix::operator*(const BitMatrix& o) const {
  if (cols_ != o.rows_) throw std::invalid_argument("BitMatrix: shape mismatch in product");
  BitMatrix out(rows_, o.cols_);
  for (int r = 0; r < rows_; ++r)
    for (int k = 0; k < cols_; ++k)
      if (get(r, k))
        for (int w = 0; w < o.words_; ++w)
          out.bits_[static_cast<std::size_t>(r * out.words_ + w)] ^= o.bits_[static_cast<std::size_t>(k * o.words_ + w)];
  return out;
}

BitMatrix BitMatrix::operator+(const BitMatrix& o) const {
  if (rows_ != o.rows_ || cols_ != o.cols_) throw std::invalid_argument("BitMatrix: shape mismatch in sum");
  BitMatrix out = *this;
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] ^= o.bits_[i];
  return out;
}

std::vector<std::string> BitMatrix::to_strings() const {
  std::vector<std::string> out;
  for (int r = 0; r < rows_; ++r) {
    std::string s;
    for (int c = 0; c < cols_; ++c) s += get(r, c) ? '1' : '0';
    out.push_back(std::move(s));
  }
  return out;
}

int ChainComplex::dimension(int k) const {
  const auto it = generators.find(k);
  return it == generators.end() ? 0 : static_cast<int>(it->second.size());
}

const BitMatrix* ChainComplex::boundary_at(int k) const {
  const auto it = boundary.find(k);
  return it == boundary.end() ? nullptr : &it->second;
}

int ChainComplex::position(int k, const std::string& id) const {
  const auto it = generators.find(k);
  if (it == generators.end()) return -1;
  for (std::size_t i = 0; i < it->second.size(); ++i)
    if (it->second[i].id == id) return static_cast<int>(i);
  return -1;
}

namespace {

const Generator* find_generator(const ChainComplex& cx, const std::string& id) {
  for (const auto& [k, gens] : cx.generators)
    for (const auto& g : gens)
      if (g.id == id) return &g;
  return nullptr;
}

}  // namespace

void verify_boundary_squared(const ChainComplex& cx) {
  for (const auto& [k, dk] : cx.boundary) {
    const BitMatrix* dk1 = cx.boundary_at(k - 1);
    if (!dk1) continue;
    const BitMatrix sq = *dk1 * dk;
    for (int r = 0; r < sq.rows(); ++r)
      for (int c = 0; c < sq.cols(); ++c)
        if (sq.get(r, c)) {
          std::ostringstream msg;
          msg << "boundary squared is nonzero in degree " << k << ": entry (" << cx.generators.at(k)[static_cast<std::size_t>(c)].id
              << " -> " << cx.generators.at(k - 2)[static_cast<std::size_t>(r)].id
              << ") is odd; a connection is missing or miscounted";
          throw ComplexError(msg.str());
        }
  }
}

ChainComplex build_complex(const std::vector<Generator>& generators, const std::vector<ConnectionCount>& counts) {
  ChainComplex cx;
  std::set<std::string> ids;
  for (const auto& g : generators) {
    if (!ids.insert(g.id).second) throw ComplexError("duplicate generator id " + g.id);
    cx.generators[g.degree].push_back(g);
  }
  for (auto& [k, gens] : cx.generators)
    std::stable_sort(gens.begin(), gens.end(), [](const Generator& a, const Generator& b) { return a.action < b.action; });

  std::map<std::pair<std::string, std::string>, int> table;
  for (const auto& c : counts) {
    const Generator* from = find_generator(cx, c.from);
    const Generator* to = find_generator(cx, c.to);
    if (!from || !to) throw ComplexError("count refers to unknown generator " + (from ? c.to : c.from));
    if (from->degree - to->degree != 1) {
      std::ostringstream msg;
      msg << "count " << c.from << " -> " << c.to << " has index gap " << from->degree - to->degree << ", expected 1";
      throw ComplexError(msg.str());
    }
    if (c.count < 0) throw ComplexError("negative count for " + c.from + " -> " + c.to);
    table[{c.from, c.to}] = c.count;
  }

  std::vector<std::string> missing;
  for (const auto& [k, gens] : cx.generators) {
    const auto lower = cx.generators.find(k - 1);
    if (lower == cx.generators.end()) continue;
    BitMatrix d(static_cast<int>(lower->second.size()), static_cast<int>(gens.size()));
    for (std::size_t c = 0; c < gens.size(); ++c)
      for (std::size_t r = 0; r < lower->second.size(); ++r) {
        const auto it = table.find({gens[c].id, lower->second[r].id});
        if (it == table.end()) {
          missing.push_back(gens[c].id + " -> " + lower->second[r].id);
          continue;
        }
        d.set(static_cast<int>(r), static_cast<int>(c), it->second % 2 == 1);
      }
    cx.boundary.emplace(k, std::move(d));
  }
  if (!missing.empty()) {
    std::string msg = "missing connection counts for index-gap-1 pairs:";
    for (const auto& m : missing) msg += " [" + m + "]";
    throw ComplexError(msg);
  }
  verify_boundary_squared(cx);
  return cx;
}

std::map<int, int> homology_ranks(const ChainComplex& cx) {
  std::map<int, int> out;
  for (const auto& [k, gens] : cx.generators) {
    const BitMatrix* dk = cx.boundary_at(k);
    const BitMatrix* dk1 = cx.boundary_at(k + 1);
    const int kernel = static_cast<int>(gens.size()) - (dk ? dk->rank() : 0);
    out[k] = kernel - (dk1 ? dk1->rank() : 0);
  }
  return out;
}

void verify_chain_map(const ChainComplex& source, const ChainComplex& target, const ContinuationMap& psi) {
  std::set<int> degrees;
  for (const auto& [k, g] : source.generators) degrees.insert(k);
  for (const auto& [k, g] : target.generators) degrees.insert(k);
  auto map_at = [&](int k) {
    const auto it = psi.maps.find(k);
    return it == psi.maps.end() ? BitMatrix(target.dimension(k), source.dimension(k)) : it->second;
  };
  auto bd = [](const ChainComplex& cx, int k) {
    const BitMatrix* d = cx.boundary_at(k);
    return d ? *d : BitMatrix(cx.dimension(k - 1), cx.dimension(k));
  };
  for (int k : degrees) {
    const BitMatrix lhs = bd(target, k) * map_at(k);
    const BitMatrix rhs = map_at(k - 1) * bd(source, k);
    const BitMatrix diff = lhs + rhs;
    for (int r = 0; r < diff.rows(); ++r)
      for (int c = 0; c < diff.cols(); ++c)
        if (diff.get(r, c)) {
          std::ostringstream msg;
          msg << "continuation map is not a chain map in degree " << k << ": entry ("
              << source.generators.at(k)[static_cast<std::size_t>(c)].id << " -> "
              << target.generators.at(k - 1)[static_cast<std::size_t>(r)].id << ") differs";
          throw ComplexError(msg.str());
        }
  }
}

ContinuationMap build_continuation(const ChainComplex& source, const ChainComplex& target,
                                   const std::vector<ConnectionCount>& counts) {
  ContinuationMap psi;
  std::set<int> degrees;
  for (const auto& [k, g] : source.generators) degrees.insert(k);
  for (const auto& [k, g] : target.generators) degrees.insert(k);
  for (int k : degrees) psi.maps.emplace(k, BitMatrix(target.dimension(k), source.dimension(k)));
  for (const auto& c : counts) {
    const Generator* from = find_generator(source, c.from);
    const Generator* to = find_generator(target, c.to);
    if (!from || !to) throw ComplexError("hybrid count refers to unknown generator " + (from ? c.to : c.from));
    if (from->degree != to->degree)
      throw ComplexError("hybrid count " + c.from + " -> " + c.to + " joins different degrees");
    const int k = from->degree;
    psi.maps.at(k).set(target.position(k, c.to), source.position(k, c.from), c.count % 2 == 1);
  }
  verify_chain_map(source, target, psi);
  return psi;
}

bool is_upper_unitriangular(const BitMatrix& m) {
  if (m.rows() != m.cols()) return false;
  for (int r = 0; r < m.rows(); ++r) {
    if (!m.get(r, r)) return false;
    for (int c = 0; c < r; ++c)
      if (m.get(r, c)) return false;
  }
  return true;
}

BitMatrix unitriangular_inverse(const BitMatrix& m) {
  if (!is_upper_unitriangular(m)) throw ComplexError("matrix is not upper unitriangular");
  const int n = m.rows();
  BitMatrix inv(n, n);
  // column l of the inverse: x_l minus the images of the lower columns
  for (int l = 0; l < n; ++l) {
    inv.set(l, l, true);
    for (int j = 0; j < l; ++j) {
      if (!m.get(j, l)) continue;
      for (int r = 0; r <= j; ++r)
        if (inv.get(r, j)) inv.set(r, l, !inv.get(r, l));
    }
  }
  return inv;
}

ContinuationMap inverse(const ContinuationMap& psi) {
  ContinuationMap out;
  for (const auto& [k, m] : psi.maps) out.maps.emplace(k, unitriangular_inverse(m));
  return out;
}

std::map<int, int> induced_homology_rank(const ChainComplex& source, const ChainComplex& target,
                                         const ContinuationMap& psi) {
  // rank of H(psi) = rank [psi Z_k | B_k(target)] - rank B_k(target), with Z_k a
  // kernel basis of the source boundary
  std::map<int, int> out;
  for (const auto& [k, m] : psi.maps) {
    const int ns = source.dimension(k);
    const BitMatrix* dk = source.boundary_at(k);
    // kernel basis by elimination on the boundary columns
    std::vector<std::vector<bool>> kernel;
    {
      const int rows = dk ? dk->rows() : 0;
      BitMatrix aug(rows + ns, ns);
      for (int c = 0; c < ns; ++c) {
        for (int r = 0; r < rows; ++r) aug.set(r, c, dk->get(r, c));
        aug.set(rows + c, c, true);
      }
      // column reduction on the top block
      std::vector<int> cols(static_cast<std::size_t>(ns));
      int piv_col = 0;
      for (int r = 0; r < rows && piv_col < ns; ++r) {
        int p = -1;
        for (int c = piv_col; c < ns; ++c)
          if (aug.get(r, c)) {
            p = c;
            break;
          }
        if (p < 0) continue;
        if (p != piv_col)
          for (int i = 0; i < rows + ns; ++i) {
            const bool a = aug.get(i, p), b = aug.get(i, piv_col);
            aug.set(i, p, b);
            aug.set(i, piv_col, a);
          }
        for (int c = piv_col + 1; c < ns; ++c)
          if (aug.get(r, c))
            for (int i = 0; i < rows + ns; ++i) aug.set(i, c, aug.get(i, c) != aug.get(i, piv_col));
        ++piv_col;
      }
      for (int c = piv_col; c < ns; ++c) {
        std::vector<bool> v(static_cast<std::size_t>(ns));
        for (int i = 0; i < ns; ++i) v[static_cast<std::size_t>(i)] = aug.get(rows + i, c);
        kernel.push_back(std::move(v));
      }
    }
    const BitMatrix* dt = target.boundary_at(k + 1);
    const int nt = target.dimension(k);
    const int nb = dt ? dt->cols() : 0;
    BitMatrix combined(nt, static_cast<int>(kernel.size()) + nb);
    for (std::size_t j = 0; j < kernel.size(); ++j)
      for (int r = 0; r < nt; ++r) {
        bool v = false;
        for (int c = 0; c < ns; ++c) v ^= (m.get(r, c) && kernel[j][static_cast<std::size_t>(c)]);
        combined.set(r, static_cast<int>(j), v);
      }
    for (int c = 0; c < nb; ++c)
      for (int r = 0; r < nt; ++r) combined.set(r, static_cast<int>(kernel.size()) + c, dt->get(r, c));
    out[k] = combined.rank() - (dt ? dt->rank() : 0);
  }
  return out;
}

double cone_profile(double r) { return 2.0 * r * r * r - 3.0 * r * r + 1.0; }
double cone_profile_derivative(double r) { return 6.0 * r * r - 6.0 * r; }

void to_json(nlohmann::json& j, const ChainComplex& cx) {
  nlohmann::json gens = nlohmann::json::array();
  for (const auto& [k, gs] : cx.generators)
    for (const auto& g : gs) gens.push_back({{"id", g.id}, {"degree", g.degree}, {"action", g.action}});
  nlohmann::json bd = nlohmann::json::object();
  for (const auto& [k, d] : cx.boundary) bd[std::to_string(k)] = d.to_strings();
  nlohmann::json ranks = nlohmann::json::object();
  for (const auto& [k, r] : homology_ranks(cx)) ranks[std::to_string(k)] = r;
  j = nlohmann::json{{"generators", gens}, {"boundary", bd}, {"homology_ranks", ranks}, {"provenance", cx.provenance}};
}

void to_json(nlohmann::json& j, const ContinuationMap& psi) {
  j = nlohmann::json::object();
  for (const auto& [k, m] : psi.maps) j[std::to_string(k)] = m.to_strings();
}

}  // namespace cotmorse
