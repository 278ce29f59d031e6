// Component layouts for fields sampled in a chart frame.
//
// Vectors are stored contravariantly (Y^i), symmetric two-tensors
// covariantly (h_ij) with only the i <= j entries kept. Derivative spaces
// used internally by the operators keep every index.
#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace shrinker {

enum class Rank { Scalar, Vector, Sym2 };

inline std::string to_string(Rank rank)
{
  switch (rank) {
    case Rank::Scalar: return "scalar";
    case Rank::Vector: return "vector";
    case Rank::Sym2: return "sym2tensor";
  }
  return "unknown";
}

inline int sym_components(int n) { return n * (n + 1) / 2; }

inline int components(Rank rank, int n)
{
  switch (rank) {
    case Rank::Scalar: return 1;
    case Rank::Vector: return n;
    case Rank::Sym2: return sym_components(n);
  }
  throw std::invalid_argument("unknown rank");
}

/// Row-major position of (i, j), i <= j, in upper-triangular storage.
inline int sym_index(int i, int j, int n)
{
  if (i > j) std::swap(i, j);
  return i * n - i * (i - 1) / 2 + (j - i);
}

inline std::vector<std::pair<int, int>> sym_pairs(int n)
{
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(sym_components(n)));
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) out.emplace_back(i, j);
  return out;
}

}  // namespace shrinker
