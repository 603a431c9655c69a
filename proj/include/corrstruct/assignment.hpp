#ifndef CORRSTRUCT_ASSIGNMENT_HPP_
#define CORRSTRUCT_ASSIGNMENT_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <queue>
#include <utility>
#include <vector>

#include "corrstruct/error.hpp"

namespace corrstruct {

/// Floor contribution of a probe patch that ends up unmatched.
inline constexpr double kDefaultUnmatchedPenalty = -50.0;

/// Dense-input sentinel for a non-assignable entry.
inline constexpr double kExcluded = std::numeric_limits<double>::quiet_NaN();

/// Row-compressed correlation matrix. Only assignable entries are stored;
/// absent entries are EXCLUDED. Columns ascend within each row.
class CorrelationMatrix {
 public:
  CorrelationMatrix() = default;
  CorrelationMatrix(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw ArgumentError("negative correlation matrix shape");
    row_start_.reserve(static_cast<std::size_t>(rows) + 1);
  }

  /// Rows are filled in order; call add() for the current row, then end_row().
  void add(int col, double value) {
    if (col < 0 || col >= cols_) throw ArgumentError("correlation column out of range");
    if (!std::isfinite(value)) throw ArgumentError("correlation entries must be finite");
    if (static_cast<int>(col_.size()) > row_start_.back() && col_.back() >= col) {
      throw ArgumentError("correlation columns must ascend within a row");
    }
    col_.push_back(col);
    value_.push_back(value);
  }

  void end_row() {
    if (static_cast<int>(row_start_.size()) > rows_) throw ArgumentError("too many correlation rows");
    row_start_.push_back(static_cast<int>(col_.size()));
  }

  /// NaN entries of a dense row-major buffer become EXCLUDED.
  static CorrelationMatrix from_dense(int rows, int cols, const std::vector<double>& dense) {
    if (dense.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
      throw ArgumentError("dense correlation buffer has wrong size");
    }
    CorrelationMatrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        const double v = dense[static_cast<std::size_t>(i) * cols + j];
        if (!std::isnan(v)) m.add(j, v);
      }
      m.end_row();
    }
    return m;
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  bool complete() const noexcept { return static_cast<int>(row_start_.size()) == rows_ + 1; }
  std::size_t nonzeros() const noexcept { return col_.size(); }

  int row_begin(int i) const { return row_start_[static_cast<std::size_t>(i)]; }
  int row_end(int i) const { return row_start_[static_cast<std::size_t>(i) + 1]; }
  int col_at(int k) const { return col_[static_cast<std::size_t>(k)]; }
  double value_at(int k) const { return value_[static_cast<std::size_t>(k)]; }

  std::optional<double> at(int i, int j) const {
    const auto first = col_.begin() + row_begin(i);
    const auto last = col_.begin() + row_end(i);
    const auto it = std::lower_bound(first, last, j);
    if (it == last || *it != j) return std::nullopt;
    return value_[static_cast<std::size_t>(it - col_.begin())];
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> row_start_{0};
  std::vector<int> col_;
  std::vector<double> value_;
};

/// One-to-one patch matching. match[i] is the gallery column of probe row i,
/// or -1 when the row is unmatched.
struct Assignment {
  std::vector<int> match;
  double score = 0.0;
  int unmatched = 0;

  std::vector<std::pair<int, int>> pairs() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < static_cast<int>(match.size()); ++i)
      if (match[static_cast<std::size_t>(i)] >= 0) out.emplace_back(i, match[static_cast<std::size_t>(i)]);
    return out;
  }
};

/// psi = sum over rows in ascending order of C(i, match[i]), or the penalty
/// for unmatched rows. Every scoring path uses this order.
inline double assignment_score(const CorrelationMatrix& c, const std::vector<int>& match, double penalty) {
  double psi = 0.0;
  for (int i = 0; i < c.rows(); ++i) {
    const int j = match[static_cast<std::size_t>(i)];
    psi += j >= 0 ? *c.at(i, j) : penalty;
  }
  return psi;
}

namespace detail {

// Min-cost view of the problem: cost = -C on real columns, and every row i
// owns a private slot column (cols + i) of cost -penalty meaning "unmatched".
class AssignmentSolver {
 public:
  AssignmentSolver(const CorrelationMatrix& c, double penalty)
      : c_(c),
        n_(c.rows()),
        m_(c.cols()),
        slot_cost_(-penalty),
        v_(static_cast<std::size_t>(m_ + n_), 0.0),
        col_owner_(static_cast<std::size_t>(m_ + n_), -1),
        row_col_(static_cast<std::size_t>(n_), -1),
        row_cost_(static_cast<std::size_t>(n_), 0.0),
        dist_(static_cast<std::size_t>(m_ + n_), kInf),
        pred_(static_cast<std::size_t>(m_ + n_), -1),
        pred_cost_(static_cast<std::size_t>(m_ + n_), 0.0),
        ready_(static_cast<std::size_t>(m_ + n_), 0) {}

  std::vector<int> solve(bool lexicographic) {
    for (int r = 0; r < n_; ++r) augment(r);
    if (lexicographic) lexicographic_pass();
    std::vector<int> match(static_cast<std::size_t>(n_), -1);
    for (int i = 0; i < n_; ++i) {
      const int col = row_col_[static_cast<std::size_t>(i)];
      match[static_cast<std::size_t>(i)] = col < m_ ? col : -1;
    }
    return match;
  }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  template <typename Fn>
  void for_each_edge(int row, Fn&& fn) const {
    for (int k = c_.row_begin(row); k < c_.row_end(row); ++k) fn(c_.col_at(k), -c_.value_at(k));
    fn(m_ + row, slot_cost_);
  }

  std::size_t at(int col) const { return static_cast<std::size_t>(col); }

  // Shortest augmenting path from free row r (Dijkstra on reduced costs
  // c(i,j) - v_j - u_i, with u_i implied by the matched edge).
  void augment(int r) {
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    touched_.clear();
    ready_list_.clear();

    auto relax = [&](int col, double d, int row, double cost) {
      if (ready_[at(col)] || !(d < dist_[at(col)])) return;
      if (dist_[at(col)] == kInf) touched_.push_back(col);
      dist_[at(col)] = d;
      pred_[at(col)] = row;
      pred_cost_[at(col)] = cost;
      heap.emplace(d, col);
    };
    for_each_edge(r, [&](int col, double cost) { relax(col, cost - v_[at(col)], r, cost); });

    int end = -1;
    while (!heap.empty()) {
      const auto [d, col] = heap.top();
      heap.pop();
      if (ready_[at(col)] || d != dist_[at(col)]) continue;
      ready_[at(col)] = 1;
      ready_list_.push_back(col);
      const int owner = col_owner_[at(col)];
      if (owner < 0) {
        end = col;
        break;
      }
      const double base = d - (row_cost_[static_cast<std::size_t>(owner)] - v_[at(col)]);
      for_each_edge(owner, [&](int next, double cost) { relax(next, base + cost - v_[at(next)], owner, cost); });
    }
    if (end < 0) throw NumericError("assignment solver found no augmenting path");

    const double total = dist_[at(end)];
    for (int col : ready_list_) v_[at(col)] += dist_[at(col)] - total;

    for (int col = end;;) {
      const int row = pred_[at(col)];
      const int prev = row_col_[static_cast<std::size_t>(row)];
      col_owner_[at(col)] = row;
      row_col_[static_cast<std::size_t>(row)] = col;
      row_cost_[static_cast<std::size_t>(row)] = pred_cost_[at(col)];
      if (row == r) break;
      col = prev;
    }

    for (int col : touched_) {
      dist_[at(col)] = kInf;
      ready_[at(col)] = 0;
    }
  }

  double cost_of(int row, int col) const {
    if (col >= m_) return slot_cost_;
    return -*c_.at(row, col);
  }

  // Among optimal assignments, pick the one whose per-row column sequence is
  // lexicographically smallest ("unmatched" sorts after every column).
  //
  // With the final duals, an assignment is optimal iff it uses only tight
  // edges and covers every column with v < 0. Row by row, try each smaller
  // tight column: (1) re-home the displaced chain along tight edges among
  // later rows; (2) if that frees the row's old column while its v < 0,
  // refill it through an alternating chain that releases a v = 0 column.
  // When (2) is satisfiable at all it is satisfiable from any (1) outcome.
  void lexicographic_pass() {
    double scale = std::abs(slot_cost_);
    for (std::size_t k = 0; k < c_.nonzeros(); ++k) scale = std::max(scale, std::abs(c_.value_at(static_cast<int>(k))));
    tol_ = 1e-12 * std::max(1.0, scale);

    for (int i = 0; i < n_; ++i) {
      const int current = row_col_[static_cast<std::size_t>(i)];
      std::vector<int> options;
      for_each_edge(i, [&](int col, double cost) {
        if (col < current && tight(i, col, cost)) options.push_back(col);
      });
      std::sort(options.begin(), options.end());
      for (int target : options) {
        const auto saved_cols = row_col_;
        const auto saved_costs = row_cost_;
        const auto saved_owner = col_owner_;
        const int sink = rehome(i, target, current);
        if (sink < 0) continue;
        if (sink == current || std::abs(v_[at(current)]) <= tol_ || refill(i, current)) break;
        row_col_ = saved_cols;
        row_cost_ = saved_costs;
        col_owner_ = saved_owner;
      }
    }
  }

  bool tight(int row, int col, double cost) const {
    const int own = row_col_[static_cast<std::size_t>(row)];
    const double u = row_cost_[static_cast<std::size_t>(row)] - v_[at(own)];
    return std::abs(cost - v_[at(col)] - u) <= tol_;
  }

  void move(int row, int col) {
    col_owner_[at(col)] = row;
    row_col_[static_cast<std::size_t>(row)] = col;
    row_cost_[static_cast<std::size_t>(row)] = cost_of(row, col);
  }

  // Gives `target` to row i and re-homes the chain of later rows it displaces.
  // Returns the column that absorbed the chain (`current` for a cycle, or a
  // free column), or -1.
  int rehome(int i, int target, int current) {
    const int first_owner = col_owner_[at(target)];
    if (first_owner >= 0 && first_owner < i) return -1;
    std::vector<int> parent(static_cast<std::size_t>(m_ + n_), -1);
    parent[at(target)] = i;
    int sink = first_owner < 0 ? target : -1;
    std::vector<int> frontier{target};
    for (std::size_t q = 0; sink < 0 && q < frontier.size(); ++q) {
      const int row = col_owner_[at(frontier[q])];
      for_each_edge(row, [&](int col, double cost) {
        if (sink >= 0 || parent[at(col)] >= 0 || col == row_col_[static_cast<std::size_t>(row)]) return;
        if (!tight(row, col, cost)) return;
        const int owner = col_owner_[at(col)];
        if (col == current || owner < 0) {
          parent[at(col)] = row;
          sink = col;
        } else if (owner > i) {
          parent[at(col)] = row;
          frontier.push_back(col);
        }
      });
    }
    if (sink < 0) return -1;
    if (sink != current) col_owner_[at(current)] = -1;
    for (int col = sink;;) {
      const int row = parent[at(col)];
      const int prev = row_col_[static_cast<std::size_t>(row)];
      move(row, col);
      if (row == i) break;
      col = prev;
    }
    return sink;
  }

  // Covers the vacated column `hole` again by shifting later rows along tight
  // edges until some column with v = 0 is released.
  bool refill(int i, int hole) {
    if (incoming_.empty()) {
      incoming_.resize(static_cast<std::size_t>(m_ + n_));
      for (int r = 0; r < n_; ++r) for_each_edge(r, [&](int col, double) { incoming_[at(col)].push_back(r); });
    }
    std::vector<int> into(static_cast<std::size_t>(n_), -1);  // column a row would move into
    std::vector<int> queue{hole};
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const int col = queue[q];
      for (int r : incoming_[at(col)]) {
        if (r <= i || into[static_cast<std::size_t>(r)] >= 0 || row_col_[static_cast<std::size_t>(r)] == col) continue;
        if (!tight(r, col, cost_of(r, col))) continue;
        into[static_cast<std::size_t>(r)] = col;
        const int own = row_col_[static_cast<std::size_t>(r)];
        if (std::abs(v_[at(own)]) <= tol_) {
          // Shift the chain ending at r; `own` is released.
          col_owner_[at(own)] = -1;
          for (int row = r;;) {
            const int dest = into[static_cast<std::size_t>(row)];
            move(row, dest);
            if (dest == hole) break;
            row = chain_row_[at(dest)];
          }
          return true;
        }
        chain_row_.resize(static_cast<std::size_t>(m_ + n_), -1);
        chain_row_[at(own)] = r;
        queue.push_back(own);
      }
    }
    return false;
  }

  const CorrelationMatrix& c_;
  int n_;
  int m_;
  double slot_cost_;
  std::vector<double> v_;
  std::vector<int> col_owner_;
  std::vector<int> row_col_;
  std::vector<double> row_cost_;
  std::vector<double> dist_;
  std::vector<int> pred_;
  std::vector<double> pred_cost_;
  std::vector<char> ready_;
  std::vector<int> touched_;
  std::vector<int> ready_list_;
  double tol_ = 0.0;
  std::vector<std::vector<int>> incoming_;
  std::vector<int> chain_row_;
};

}  // namespace detail

/// Globally constrained one-to-one matching: maximises
///   sum_{matched} C(i, j) + penalty * (#unmatched rows)
/// where EXCLUDED entries cannot be used. Among optima the lexicographically
/// smallest row-to-column sequence is returned.
inline Assignment solve_assignment(const CorrelationMatrix& c, double penalty = kDefaultUnmatchedPenalty) {
  if (!c.complete()) throw ArgumentError("correlation matrix is not fully built");
  if (!std::isfinite(penalty)) throw ArgumentError("unmatched penalty must be finite");
  Assignment a;
  if (c.rows() == 0) return a;
  detail::AssignmentSolver solver(c, penalty);
  a.match = solver.solve(true);
  a.score = assignment_score(c, a.match, penalty);
  a.unmatched = static_cast<int>(std::count(a.match.begin(), a.match.end(), -1));
  return a;
}

/// Per-row argmax without the one-to-one constraint (ties to the smaller
/// column); rows with no assignable entry take the penalty.
inline Assignment greedy_assignment(const CorrelationMatrix& c, double penalty = kDefaultUnmatchedPenalty) {
  if (!c.complete()) throw ArgumentError("correlation matrix is not fully built");
  Assignment a;
  a.match.assign(static_cast<std::size_t>(c.rows()), -1);
  for (int i = 0; i < c.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int k = c.row_begin(i); k < c.row_end(i); ++k) {
      if (c.value_at(k) > best) {
        best = c.value_at(k);
        a.match[static_cast<std::size_t>(i)] = c.col_at(k);
      }
    }
  }
  a.score = assignment_score(c, a.match, penalty);
  a.unmatched = static_cast<int>(std::count(a.match.begin(), a.match.end(), -1));
  return a;
}

}  // namespace corrstruct

#endif  // CORRSTRUCT_ASSIGNMENT_HPP_
