/**
 * @file sparse_grid.hpp
 * @brief Two-dimensional adaptive sparse grid with piecewise-linear
 *        hierarchical hat functions and boundary-extrapolating modified
 *        basis, storing any number of outputs per grid point.
 *
 * Coordinates live on the unit square. A node (l, i) per dimension sits at
 * i * 2^-l with odd i in [1, 2^l - 1]; level 1 is the constant function.
 */
#pragma once

#include "vle/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <new>
#include <numeric>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#if defined(__linux__)
#include <sys/mman.h>
#endif

namespace vle::sparse {

/// The node set violates hierarchical closure or another structural rule.
class StructureError : public Error {
public:
    using Error::Error;
};

inline constexpr std::uint32_t max_level = 30;

struct NodeKey {
    std::array<std::uint32_t, 2> level{1, 1};
    std::array<std::uint32_t, 2> index{1, 1};

    friend bool operator==(const NodeKey&, const NodeKey&) = default;

    std::uint32_t level_sum() const { return level[0] + level[1]; }
};

struct NodeKeyHash {
    std::size_t operator()(const NodeKey& k) const noexcept
    {
        std::uint64_t h = (std::uint64_t{k.level[0]} << 58) ^ (std::uint64_t{k.level[1]} << 52) ^
                          (std::uint64_t{k.index[0]} << 26) ^ std::uint64_t{k.index[1]};
        h ^= h >> 33;
        h *= 0xff51afd7ed558ccdULL;
        h ^= h >> 33;
        return static_cast<std::size_t>(h);
    }
};

inline double coordinate(std::uint32_t level, std::uint32_t index)
{
    return std::ldexp(static_cast<double>(index), -static_cast<int>(level));
}

inline bool valid_key(const NodeKey& k)
{
    for (int d = 0; d < 2; ++d) {
        if (k.level[d] < 1 || k.level[d] > max_level)
            return false;
        if (k.index[d] % 2 == 0 || k.index[d] >= (1u << k.level[d]))
            return false;
    }
    return true;
}

namespace detail {

enum class BasisKind : std::uint8_t { constant, left, right, interior };

inline BasisKind basis_kind(std::uint32_t level, std::uint32_t index)
{
    if (level == 1)
        return BasisKind::constant;
    if (index == 1)
        return BasisKind::left;
    if (index == (1u << level) - 1)
        return BasisKind::right;
    return BasisKind::interior;
}

/// Every variant as max(1 + slope (x - c) - fold |x - c|, 0): interior hats
/// fold, boundary functions are one-sided ramps, the constant has neither.
struct BasisCoeffs {
    double slope = 0.0;
    double fold = 0.0;
};

inline BasisCoeffs basis_coeffs(BasisKind kind, double scale)
{
    switch (kind) {
    case BasisKind::constant: return {0.0, 0.0};
    case BasisKind::left: return {-scale, 0.0};
    case BasisKind::right: return {scale, 0.0};
    case BasisKind::interior: break;
    }
    return {0.0, scale};
}

inline double basis_eval(double center, BasisCoeffs c, double x)
{
    const double d = x - center;
    return std::max(1.0 + c.slope * d - c.fold * std::abs(d), 0.0);
}

} // namespace detail

/// Modified linear basis: constant on level 1, the outermost hats of every
/// finer level extrapolate linearly to the boundary.
inline double basis_1d(std::uint32_t level, std::uint32_t index, double x)
{
    const auto kind = detail::basis_kind(level, index);
    return detail::basis_eval(coordinate(level, index),
                              detail::basis_coeffs(kind, std::ldexp(1.0, static_cast<int>(level))), x);
}

/// Parent of (level, index) in one dimension; level must exceed 1.
inline std::uint32_t parent_index(std::uint32_t index)
{
    const std::uint32_t up = (index + 1) / 2;
    return (up % 2 == 1) ? up : (index - 1) / 2;
}

/// Node set plus per-node output surpluses, with child links for evaluation.
class Grid {
    struct Record {
        double center[2];
        detail::BasisCoeffs coeff[2];
        std::int32_t link[4]; // dim-0 left/right child, dim-1 left/right child
    };

public:
    explicit Grid(std::size_t outputs = 1) : outputs_(outputs)
    {
        if (outputs_ == 0)
            throw ConfigError("sparse grid needs at least one output");
    }

    std::size_t outputs() const { return outputs_; }
    std::size_t size() const { return keys_.size(); }
    const std::vector<NodeKey>& keys() const { return keys_; }

    std::span<const double> surplus(std::size_t node) const
    {
        return {surplus_.data() + node * outputs_, outputs_};
    }
    std::span<double> surplus(std::size_t node) { return {surplus_.data() + node * outputs_, outputs_}; }

    std::array<double, 2> coord(std::size_t node) const
    {
        const auto& k = keys_[node];
        return {coordinate(k.level[0], k.index[0]), coordinate(k.level[1], k.index[1])};
    }

    bool contains(const NodeKey& k) const { return lookup_.count(k) != 0; }

    std::ptrdiff_t find(const NodeKey& k) const
    {
        const auto it = lookup_.find(k);
        return it == lookup_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
    }

    /// Inserts a node with zero surplus. Closure is not checked here.
    std::size_t insert(const NodeKey& k)
    {
        if (!valid_key(k))
            throw StructureError("invalid sparse grid node key");
        if (const auto it = lookup_.find(k); it != lookup_.end())
            return it->second;
        const std::size_t id = keys_.size();
        keys_.push_back(k);
        lookup_.emplace(k, id);
        if (k == NodeKey{})
            root_ = static_cast<std::int32_t>(id);
        surplus_.resize(surplus_.size() + outputs_, 0.0);
        Record r{};
        for (int d = 0; d < 2; ++d) {
            r.center[d] = coordinate(k.level[d], k.index[d]);
            r.coeff[d] = detail::basis_coeffs(detail::basis_kind(k.level[d], k.index[d]),
                                              std::ldexp(1.0, static_cast<int>(k.level[d])));
        }
        r.link[0] = r.link[1] = r.link[2] = r.link[3] = -1;
        rec_.push_back(r);
        for (int d = 0; d < 2; ++d) {
            // link to parent in dimension d
            if (k.level[d] > 1) {
                NodeKey pk = k;
                pk.level[d] -= 1;
                pk.index[d] = parent_index(k.index[d]);
                if (const auto p = find(pk); p >= 0) {
                    const int side = coordinate(k.level[d], k.index[d]) < coordinate(pk.level[d], pk.index[d]) ? 0 : 1;
                    rec_[static_cast<std::size_t>(p)].link[2 * d + side] = static_cast<std::int32_t>(id);
                }
            }
            // link to already-present children in dimension d
            for (int side = 0; side < 2; ++side) {
                if (k.level[d] >= max_level)
                    break;
                NodeKey ck = k;
                ck.level[d] += 1;
                ck.index[d] = 2 * k.index[d] + (side == 0 ? -1u : 1u);
                if (const auto c = find(ck); c >= 0)
                    rec_[id].link[2 * d + side] = static_cast<std::int32_t>(c);
            }
        }
        return id;
    }

    /// Parents of `k` that are missing, in every dimension, recursively.
    std::vector<NodeKey> missing_ancestors(const NodeKey& k) const
    {
        std::vector<NodeKey> out;
        std::vector<NodeKey> stack{k};
        std::unordered_map<NodeKey, bool, NodeKeyHash> seen;
        while (!stack.empty()) {
            const NodeKey cur = stack.back();
            stack.pop_back();
            for (int d = 0; d < 2; ++d) {
                if (cur.level[d] == 1)
                    continue;
                NodeKey pk = cur;
                pk.level[d] -= 1;
                pk.index[d] = parent_index(cur.index[d]);
                if (contains(pk) || seen.count(pk))
                    continue;
                seen.emplace(pk, true);
                out.push_back(pk);
                stack.push_back(pk);
            }
        }
        return out;
    }

    bool is_closed() const
    {
        for (const auto& k : keys_)
            if (!missing_ancestors(k).empty())
                return false;
        return !keys_.empty() && contains(NodeKey{});
    }

    /// Child keys of `node` not yet in the grid.
    std::vector<NodeKey> missing_children(std::size_t node) const
    {
        std::vector<NodeKey> out;
        const auto& k = keys_[node];
        for (int d = 0; d < 2; ++d) {
            if (k.level[d] >= max_level)
                continue;
            for (int side = 0; side < 2; ++side)
                if (rec_[node].link[2 * d + side] < 0) {
                    NodeKey ck = k;
                    ck.level[d] += 1;
                    ck.index[d] = 2 * k.index[d] + (side == 0 ? -1u : 1u);
                    out.push_back(ck);
                }
        }
        return out;
    }

    /// Interpolant at unit coordinates, written to `out` (size outputs()).
    /// Walks the dim-0 child chain from the root and, from each node on it,
    /// the dim-1 chain, so only nodes whose support holds the point are visited.
    void evaluate(double u, double v, std::span<double> out) const
    {
        if (keys_.empty()) {
            std::fill(out.begin(), out.end(), 0.0);
            return;
        }
        if (root_ < 0)
            throw StructureError("sparse grid has no root node");
        if (outputs_ == 12)
            walk<12>(u, v, out.data());
        else
            walk<0>(u, v, out.data());
    }

    std::vector<double> evaluate(double u, double v) const
    {
        std::vector<double> out(outputs_);
        evaluate(u, v, out);
        return out;
    }

    /// Node ids ordered by level sum (ancestors before descendants).
    std::vector<std::size_t> level_order() const
    {
        std::vector<std::size_t> order(keys_.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return keys_[a].level_sum() < keys_[b].level_sum();
        });
        return order;
    }

    /// Sets surpluses of `nodes` from nodal values (row-major, outputs() per
    /// node), assuming every ancestor of each node already holds its surplus.
    void hierarchize_nodes(std::span<const std::size_t> nodes, std::span<const double> nodal)
    {
        std::vector<std::size_t> order(nodes.begin(), nodes.end());
        std::vector<std::size_t> pos(order.size());
        std::iota(pos.begin(), pos.end(), std::size_t{0});
        std::stable_sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) {
            return keys_[order[a]].level_sum() < keys_[order[b]].level_sum();
        });
        std::vector<double> interp(outputs_);
        for (std::size_t p : pos) {
            const std::size_t id = order[p];
            auto sp = surplus(id);
            std::fill(sp.begin(), sp.end(), 0.0);
            const auto c = coord(id);
            evaluate(c[0], c[1], interp);
            for (std::size_t j = 0; j < outputs_; ++j)
                sp[j] = nodal[p * outputs_ + j] - interp[j];
        }
    }

private:
    template <std::size_t K>
    void walk(double u, double v, double* out) const
    {
        const std::size_t k = K == 0 ? outputs_ : K;
        double acc[K == 0 ? 1 : K] = {};
        if constexpr (K == 0)
            std::fill(out, out + k, 0.0);
        const Record* rec = rec_.data();
        const double* s = surplus_.data();
        for (std::int32_t n0 = root_; n0 >= 0;) {
            const Record& r0 = rec[n0];
            const double phi0 = detail::basis_eval(r0.center[0], r0.coeff[0], u);
            if (phi0 != 0.0) {
                for (std::int32_t n1 = n0; n1 >= 0;) {
                    const Record& r1 = rec[n1];
                    const double phi = phi0 * detail::basis_eval(r1.center[1], r1.coeff[1], v);
                    const double* row = s + static_cast<std::size_t>(n1) * k;
                    if constexpr (K == 0) {
                        for (std::size_t j = 0; j < k; ++j)
                            out[j] += phi * row[j];
                    } else {
                        for (std::size_t j = 0; j < K; ++j)
                            acc[j] += phi * row[j];
                    }
                    n1 = r1.link[v < r1.center[1] ? 2 : 3];
                }
            }
            n0 = r0.link[u < r0.center[0] ? 0 : 1];
        }
        if constexpr (K != 0)
            std::copy_n(acc, K, out);
    }

    std::size_t outputs_;
    std::vector<NodeKey> keys_;
    std::vector<double> surplus_;
    std::vector<Record> rec_;
    std::int32_t root_ = -1;
    std::unordered_map<NodeKey, std::size_t, NodeKeyHash> lookup_;
};

/// The interpolant of a grid tabulated on the tensor mesh of all node
/// coordinates (plus the domain edges). The interpolant is bilinear on every
/// mesh cell, so lookup plus bilinear blending reproduces it up to rounding at
/// constant cost per query.
namespace detail {

/// Zero-initialised double array on 2 MiB boundaries. On Linux the kernel is
/// asked to back it with huge pages, which keeps random lookups into a large
/// table from missing the TLB on nearly every access.
class LargeBuffer {
public:
    LargeBuffer() = default;
    explicit LargeBuffer(std::size_t n) : size_(n)
    {
        if (n == 0)
            return;
        constexpr std::size_t align = std::size_t{2} << 20;
        const std::size_t bytes = (n * sizeof(double) + align - 1) / align * align;
        void* p = std::aligned_alloc(align, bytes);
        if (!p)
            throw std::bad_alloc();
#if defined(__linux__) && defined(MADV_HUGEPAGE)
        ::madvise(p, bytes, MADV_HUGEPAGE);
#endif
        data_.reset(static_cast<double*>(p));
        std::fill_n(data_.get(), n, 0.0);
    }

    double* data() { return data_.get(); }
    const double* data() const { return data_.get(); }
    std::size_t size() const { return size_; }

private:
    struct Free {
        void operator()(double* p) const { std::free(p); }
    };
    std::unique_ptr<double, Free> data_;
    std::size_t size_ = 0;
};

} // namespace detail

class TensorTable {
public:
    /// nullopt when the table would exceed `max_bytes`.
    static std::optional<TensorTable> compile(const Grid& g, std::size_t max_bytes)
    {
        if (g.size() == 0)
            return std::nullopt;
        TensorTable t;
        t.k_ = g.outputs();
        std::array<std::uint32_t, 2> deepest{1, 1};
        for (int d = 0; d < 2; ++d) {
            t.mesh_[d] = {0.0, 1.0};
            for (std::size_t n = 0; n < g.size(); ++n) {
                t.mesh_[d].push_back(g.coord(n)[d]);
                deepest[d] = std::max(deepest[d], g.keys()[n].level[d]);
            }
            std::sort(t.mesh_[d].begin(), t.mesh_[d].end());
            t.mesh_[d].erase(std::unique(t.mesh_[d].begin(), t.mesh_[d].end()), t.mesh_[d].end());
        }
        const std::size_t nx = t.mesh_[0].size();
        const std::size_t ny = t.mesh_[1].size();
        const double bytes = static_cast<double>(nx) * static_cast<double>(ny) * static_cast<double>(t.k_) * 8.0;
        if (bytes > static_cast<double>(max_bytes))
            return std::nullopt;
        t.values_ = detail::LargeBuffer(nx * ny * t.k_);
        for (std::size_t i = 0; i < nx; ++i)
            for (std::size_t j = 0; j < ny; ++j)
                g.evaluate(t.mesh_[0][i], t.mesh_[1][j], std::span<double>(t.values_.data() + (i * ny + j) * t.k_, t.k_));
        // Every mesh coordinate is a multiple of 2^-deepest, so a uniform
        // array at that resolution maps a point straight to its cell.
        for (int d = 0; d < 2; ++d) {
            if (deepest[d] > 20)
                continue;
            const std::size_t cells = std::size_t{1} << deepest[d];
            t.cell_[d].resize(cells);
            std::size_t c = 0;
            for (std::size_t f = 0; f < cells; ++f) {
                const double left = std::ldexp(static_cast<double>(f), -static_cast<int>(deepest[d]));
                while (c + 2 < t.mesh_[d].size() && t.mesh_[d][c + 1] <= left)
                    ++c;
                t.cell_[d][f] = static_cast<std::uint32_t>(c);
            }
        }
        return t;
    }

    std::size_t bytes() const
    {
        return values_.size() * sizeof(double) + (cell_[0].size() + cell_[1].size()) * sizeof(std::uint32_t);
    }

    void evaluate(double u, double v, std::span<double> out) const { interpolate(find_cell(u, v), out.data()); }

    /// Row-major results for points (u[i], v[i]). Cells are located a chunk
    /// ahead of use and their rows prefetched, so the memory latency of
    /// consecutive queries overlaps.
    void evaluate_batch(std::span<const double> u, std::span<const double> v, double* out) const
    {
        constexpr std::size_t chunk = 32;
        std::array<Cell, chunk> cells;
        for (std::size_t lo = 0; lo < u.size(); lo += chunk) {
            const std::size_t n = std::min(chunk, u.size() - lo);
            for (std::size_t i = 0; i < n; ++i) {
                cells[i] = find_cell(u[lo + i], v[lo + i]);
                prefetch(cells[i].row);
                prefetch(cells[i].row + stride());
            }
            for (std::size_t i = 0; i < n; ++i)
                interpolate(cells[i], out + (lo + i) * k_);
        }
    }

private:
    struct Cell {
        const double* row; ///< values at (a, b); (a, b + 1) follows directly
        double tu;
        double tv;
    };

    std::size_t stride() const { return mesh_[1].size() * k_; }

    Cell find_cell(double u, double v) const
    {
        const std::size_t a = locate(0, u);
        const std::size_t b = locate(1, v);
        const auto& x = mesh_[0];
        const auto& y = mesh_[1];
        return {values_.data() + (a * y.size() + b) * k_, (u - x[a]) / (x[a + 1] - x[a]), (v - y[b]) / (y[b + 1] - y[b])};
    }

    void interpolate(const Cell& c, double* out) const
    {
        const double* r00 = c.row;
        const double* r01 = r00 + k_;
        const double* r10 = r00 + stride();
        const double* r11 = r10 + k_;
        const double tu = c.tu;
        const double tv = c.tv;
        for (std::size_t j = 0; j < k_; ++j)
            out[j] = (1.0 - tu) * ((1.0 - tv) * r00[j] + tv * r01[j]) + tu * ((1.0 - tv) * r10[j] + tv * r11[j]);
    }

    /// Requests the two corner records starting at `p`.
    void prefetch([[maybe_unused]] const double* p) const
    {
#if defined(__GNUC__) || defined(__clang__)
        const char* c = reinterpret_cast<const char*>(p);
        const char* end = reinterpret_cast<const char*>(p + 2 * k_);
        for (; c < end; c += 64)
            __builtin_prefetch(c);
        __builtin_prefetch(end - 1);
#endif
    }

    std::size_t locate(int d, double x) const
    {
        const auto& m = mesh_[static_cast<std::size_t>(d)];
        const auto& cells = cell_[static_cast<std::size_t>(d)];
        if (!cells.empty()) {
            const auto f = static_cast<std::size_t>(x * static_cast<double>(cells.size()));
            return cells[std::min(f, cells.size() - 1)];
        }
        const auto it = std::upper_bound(m.begin() + 1, m.end() - 1, x);
        return static_cast<std::size_t>(it - m.begin()) - 1;
    }

    std::size_t k_ = 0;
    std::array<std::vector<double>, 2> mesh_;
    std::array<std::vector<std::uint32_t>, 2> cell_;
    detail::LargeBuffer values_;
};

/// Regular sparse grid of level n: all nodes with l_1 + l_2 <= n + 1.
inline std::vector<NodeKey> regular_keys(std::uint32_t n)
{
    std::vector<NodeKey> out;
    for (std::uint32_t l0 = 1; l0 <= n; ++l0)
        for (std::uint32_t l1 = 1; l0 + l1 <= n + 1; ++l1)
            for (std::uint32_t i0 = 1; i0 < (1u << l0); i0 += 2)
                for (std::uint32_t i1 = 1; i1 < (1u << l1); i1 += 2)
                    out.push_back(NodeKey{{l0, l1}, {i0, i1}});
    return out;
}

/// Builds a grid from a closed node set and its nodal values; throws
/// StructureError if some node's parent is missing.
inline Grid hierarchize(std::span<const NodeKey> nodes, std::span<const double> nodal, std::size_t outputs)
{
    if (nodal.size() != nodes.size() * outputs)
        throw InputError("nodal value count does not match node count");
    Grid g(outputs);
    for (const auto& k : nodes)
        g.insert(k);
    if (g.size() != nodes.size())
        throw StructureError("duplicate node keys");
    if (!g.is_closed())
        throw StructureError("node set is not hierarchically closed");
    std::vector<std::size_t> ids(nodes.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    g.hierarchize_nodes(ids, nodal);
    return g;
}

/// Nodal values of every node of `g`, row-major.
inline std::vector<double> dehierarchize(const Grid& g)
{
    std::vector<double> out(g.size() * g.outputs());
    for (std::size_t n = 0; n < g.size(); ++n) {
        const auto c = g.coord(n);
        g.evaluate(c[0], c[1], std::span<double>(out.data() + n * g.outputs(), g.outputs()));
    }
    return out;
}

} // namespace vle::sparse
