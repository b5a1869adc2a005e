#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "gcr/dataset.hpp"
#include "gcr/error.hpp"
#include "gcr/vecl.hpp"

namespace gcr {

// ---------------------------------------------------------------------------
// Mean-model formulas: term ("+" term)*, term := factor (":" factor)*,
// factor := ident | "C(" ident ")". The intercept is always present; an empty
// formula is intercept-only. Categorical expansion omits the baseline level
// (smallest after numeric/lexicographic sort).
// ---------------------------------------------------------------------------

struct MeanFactor {
  bool categorical = false;
  std::string col;
};

struct MeanTerm {
  std::vector<MeanFactor> factors;
  std::string text;
};

struct MeanFormula {
  std::vector<MeanTerm> terms;
  std::string text;

  static MeanFormula parse(const std::string& input);
};

// ---------------------------------------------------------------------------
// Pair-covariate formulas: cterm ("+" cterm)* with
// cterm := intercept | same(c) | botheq(c,v) | diff(c) | absdiff(c)
//        | sqdiff(c) | logabsdiff(c).
// The intercept is NOT implicit; it must be written.
// ---------------------------------------------------------------------------

enum class CorrTermKind { Intercept, Same, BothEq, Diff, AbsDiff, SqDiff, LogAbsDiff };

struct CorrTerm {
  CorrTermKind kind = CorrTermKind::Intercept;
  std::string col;
  std::string value;  // botheq only
  std::string text;
};

struct CorrFormula {
  std::vector<CorrTerm> terms;
  std::string text;

  static CorrFormula parse(const std::string& input);
};

namespace detail {

struct Cursor {
  const std::string& s;
  size_t pos = 0;

  void skip_ws() {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  }
  bool at_end() {
    skip_ws();
    return pos >= s.size();
  }
  bool accept(char c) {
    skip_ws();
    if (pos < s.size() && s[pos] == c) { ++pos; return true; }
    return false;
  }
  void expect(char c, const char* what) {
    if (!accept(c))
      fail_data(std::string("formula syntax error at position ") +
                std::to_string(pos) + ": expected '" + c + "' " + what +
                " in \"" + s + "\"");
  }
  std::string ident() {
    skip_ws();
    const size_t start = pos;
    while (pos < s.size() &&
           (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_' ||
            s[pos] == '.'))
      ++pos;
    if (pos == start)
      fail_data("formula syntax error at position " + std::to_string(pos) +
                ": expected an identifier in \"" + s + "\"");
    return s.substr(start, pos - start);
  }
};

}  // namespace detail

inline MeanFormula MeanFormula::parse(const std::string& input) {
  MeanFormula mf;
  mf.text = input;
  detail::Cursor cur{input};
  if (cur.at_end()) return mf;  // intercept-only
  while (true) {
    MeanTerm term;
    const size_t start = cur.pos;
    while (true) {
      MeanFactor f;
      cur.skip_ws();
      if (cur.pos < input.size() && input[cur.pos] == 'C' &&
          cur.pos + 1 < input.size() && input[cur.pos + 1] == '(') {
        cur.pos += 2;
        f.categorical = true;
        f.col = cur.ident();
        cur.expect(')', "to close C(");
      } else {
        f.categorical = false;
        f.col = cur.ident();
      }
      term.factors.push_back(std::move(f));
      if (!cur.accept(':')) break;
    }
    term.text = detail::trim(input.substr(start, cur.pos - start));
    mf.terms.push_back(std::move(term));
    if (cur.at_end()) break;
    cur.expect('+', "between terms");
  }
  return mf;
}

inline CorrFormula CorrFormula::parse(const std::string& input) {
  CorrFormula cf;
  cf.text = input;
  detail::Cursor cur{input};
  if (cur.at_end())
    fail_data("correlation formula is empty; write at least 'intercept'");
  while (true) {
    const size_t start = cur.pos;
    const std::string name = cur.ident();
    CorrTerm term;
    if (name == "intercept") {
      term.kind = CorrTermKind::Intercept;
    } else {
      if (name == "same") term.kind = CorrTermKind::Same;
      else if (name == "botheq") term.kind = CorrTermKind::BothEq;
      else if (name == "diff") term.kind = CorrTermKind::Diff;
      else if (name == "absdiff") term.kind = CorrTermKind::AbsDiff;
      else if (name == "sqdiff") term.kind = CorrTermKind::SqDiff;
      else if (name == "logabsdiff") term.kind = CorrTermKind::LogAbsDiff;
      else
        fail_data("unknown correlation term '" + name + "' at position " +
                  std::to_string(start) + " in \"" + input + "\"");
      cur.expect('(', ("after '" + name + "'").c_str());
      term.col = cur.ident();
      if (term.kind == CorrTermKind::BothEq) {
        cur.expect(',', "between botheq arguments");
        cur.skip_ws();
        const size_t vstart = cur.pos;
        while (cur.pos < input.size() && input[cur.pos] != ')') ++cur.pos;
        term.value = detail::trim(input.substr(vstart, cur.pos - vstart));
        if (term.value.empty()) fail_data("botheq requires a value argument");
      }
      cur.expect(')', "to close the term");
    }
    term.text = detail::trim(input.substr(start, cur.pos - start));
    cf.terms.push_back(std::move(term));
    if (cur.at_end()) break;
    cur.expect('+', "between terms");
  }
  return cf;
}

// ---------------------------------------------------------------------------
// Design bundle: per cluster, the mean design X_i (m_i x p), the
// pair-covariate matrix W_i (m_i(m_i-1)/2 x d, rows in vecl order) and the
// response y_i. diff(c) for pair (j,k) is c_j - c_k under the j > k vecl
// convention; all other pair terms are symmetric in (j,k).
// ---------------------------------------------------------------------------

struct DesignBundle {
  std::vector<std::string> beta_names;
  std::vector<std::string> alpha_names;
  std::vector<std::string> cluster_ids;
  std::vector<Eigen::MatrixXd> x;
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> y;

  int p() const { return static_cast<int>(beta_names.size()); }
  int d() const { return static_cast<int>(alpha_names.size()); }
  int n_clusters() const { return static_cast<int>(x.size()); }
  size_t n_obs() const {
    size_t n = 0;
    for (const auto& yi : y) n += yi.size();
    return n;
  }
  size_t n_pairs() const {
    size_t n = 0;
    for (const auto& wi : w) n += wi.rows();
    return n;
  }
  int cluster_size(int i) const { return static_cast<int>(y[i].size()); }

  DesignBundle subset(const std::vector<int>& clusters) const {
    DesignBundle out;
    out.beta_names = beta_names;
    out.alpha_names = alpha_names;
    for (int i : clusters) {
      out.cluster_ids.push_back(cluster_ids[i]);
      out.x.push_back(x[i]);
      out.w.push_back(w[i]);
      out.y.push_back(y[i]);
    }
    return out;
  }
};

namespace detail {

inline const Column& referenced_column(const ClusteredDataset& data,
                                       const std::string& col,
                                       const std::string& where) {
  if (!data.has_column(col))
    fail_data("unknown column '" + col + "' referenced by " + where);
  return data.column(col);
}

inline void require_no_missing(const ClusteredDataset& data, const Column& col,
                               const std::string& name) {
  for (size_t r = 0; r < col.missing.size(); ++r)
    if (col.missing[r])
      fail_data("column '" + name + "' has a missing value in cluster '" +
                data.cluster_id(data.cluster_of(r)) +
                "'; rows with missing analyzed fields are rejected");
}

// Sorted distinct levels of a column; numeric columns sort by value,
// categorical ones lexicographically. The first (smallest) level is the
// omitted baseline.
inline std::vector<std::string> column_levels(const Column& col) {
  if (col.numeric) {
    std::set<double> vals(col.values.begin(), col.values.end());
    std::vector<std::string> out;
    for (double v : vals) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%g", v);
      out.push_back(buf);
    }
    return out;
  }
  std::set<std::string> vals;
  for (const auto& s : col.raw) vals.insert(trim(s));
  return {vals.begin(), vals.end()};
}

inline bool level_matches(const Column& col, size_t row, const std::string& level) {
  if (col.numeric) {
    double lv;
    parse_double(level, lv);
    return col.values[row] == lv;
  }
  return trim(col.raw[row]) == level;
}

inline bool cells_equal(const Column& col, size_t a, size_t b) {
  if (col.numeric) return col.values[a] == col.values[b];
  return trim(col.raw[a]) == trim(col.raw[b]);
}

// One expanded mean column: evaluates to a double per flat row.
struct MeanColumn {
  std::string name;
  // factors as (column pointer, optional level); numeric factor has no level
  std::vector<std::pair<const Column*, std::string>> parts;

  double eval(size_t row) const {
    double v = 1.0;
    for (const auto& [col, level] : parts)
      v *= level.empty() ? col->values[row]
                         : (level_matches(*col, row, level) ? 1.0 : 0.0);
    return v;
  }
};

}  // namespace detail

inline DesignBundle build_designs(const ClusteredDataset& data,
                                  const MeanFormula& mf, const CorrFormula& cf) {
  DesignBundle out;

  // expand mean terms into concrete columns
  std::vector<detail::MeanColumn> mean_cols;
  mean_cols.push_back({"(Intercept)", {}});
  for (const auto& term : mf.terms) {
    std::vector<detail::MeanColumn> expanded;
    expanded.push_back({"", {}});
    for (const auto& factor : term.factors) {
      const Column& col =
          detail::referenced_column(data, factor.col, "mean term '" + term.text + "'");
      detail::require_no_missing(data, col, factor.col);
      std::vector<detail::MeanColumn> next;
      if (factor.categorical) {
        const auto levels = detail::column_levels(col);
        for (size_t l = 1; l < levels.size(); ++l) {  // baseline omitted
          for (const auto& base : expanded) {
            detail::MeanColumn mc = base;
            mc.name += (mc.name.empty() ? "" : ":") + ("C(" + factor.col + ")[" + levels[l] + "]");
            mc.parts.emplace_back(&col, levels[l]);
            next.push_back(std::move(mc));
          }
        }
      } else {
        if (!col.numeric)
          fail_data("column '" + factor.col +
                    "' is categorical; write C(" + factor.col +
                    ") to expand it");
        for (const auto& base : expanded) {
          detail::MeanColumn mc = base;
          mc.name += (mc.name.empty() ? "" : ":") + factor.col;
          mc.parts.emplace_back(&col, std::string());
          next.push_back(std::move(mc));
        }
      }
      expanded = std::move(next);
    }
    for (auto& mc : expanded) mean_cols.push_back(std::move(mc));
  }
  for (const auto& mc : mean_cols) out.beta_names.push_back(mc.name);

  // resolve pair-covariate terms
  struct PairTerm {
    CorrTermKind kind;
    const Column* col = nullptr;
    std::string value;
  };
  std::vector<PairTerm> pair_terms;
  for (const auto& term : cf.terms) {
    PairTerm pt;
    pt.kind = term.kind;
    if (term.kind != CorrTermKind::Intercept) {
      const Column& col =
          detail::referenced_column(data, term.col, "correlation term '" + term.text + "'");
      detail::require_no_missing(data, col, term.col);
      const bool needs_numeric = term.kind == CorrTermKind::Diff ||
                                 term.kind == CorrTermKind::AbsDiff ||
                                 term.kind == CorrTermKind::SqDiff ||
                                 term.kind == CorrTermKind::LogAbsDiff;
      if (needs_numeric && !col.numeric)
        fail_data("correlation term '" + term.text + "' needs a numeric column");
      if (term.kind == CorrTermKind::BothEq && col.numeric) {
        double v;
        if (!detail::parse_double(term.value, v))
          fail_data("botheq value '" + term.value +
                    "' is not parseable against numeric column '" + term.col + "'");
      }
      pt.col = &col;
      pt.value = term.value;
    }
    pair_terms.push_back(std::move(pt));
    out.alpha_names.push_back(term.text);
  }

  const int p = static_cast<int>(mean_cols.size());
  const int d = static_cast<int>(pair_terms.size());

  for (int i = 0; i < data.n_clusters(); ++i) {
    const auto [begin, end] = data.span(i);
    const int m = static_cast<int>(end - begin);
    Eigen::MatrixXd xi(m, p);
    Eigen::VectorXd yi(m);
    for (int j = 0; j < m; ++j) {
      yi[j] = data.response(begin + j);
      for (int c = 0; c < p; ++c) xi(j, c) = mean_cols[c].eval(begin + j);
    }
    Eigen::MatrixXd wi(vecl_size(m), d);
    for_each_pair(m, [&](int j, int k, int idx) {
      for (int c = 0; c < d; ++c) {
        const PairTerm& pt = pair_terms[c];
        const size_t a = begin + j, b = begin + k;  // j > k
        double v = 0.0;
        switch (pt.kind) {
          case CorrTermKind::Intercept: v = 1.0; break;
          case CorrTermKind::Same:
            v = detail::cells_equal(*pt.col, a, b) ? 1.0 : 0.0;
            break;
          case CorrTermKind::BothEq:
            v = detail::level_matches(*pt.col, a, pt.value) &&
                        detail::level_matches(*pt.col, b, pt.value)
                    ? 1.0 : 0.0;
            break;
          case CorrTermKind::Diff: v = pt.col->values[a] - pt.col->values[b]; break;
          case CorrTermKind::AbsDiff:
            v = std::fabs(pt.col->values[a] - pt.col->values[b]);
            break;
          case CorrTermKind::SqDiff: {
            const double dd = pt.col->values[a] - pt.col->values[b];
            v = dd * dd;
            break;
          }
          case CorrTermKind::LogAbsDiff: {
            const double dd = std::fabs(pt.col->values[a] - pt.col->values[b]);
            if (dd == 0.0)
              fail_data(out.alpha_names[c] +
                        ": duplicated values within cluster '" +
                        data.cluster_id(i) + "'");
            v = std::log(dd);
            break;
          }
        }
        wi(idx, c) = v;
      }
    });
    out.cluster_ids.push_back(data.cluster_id(i));
    out.x.push_back(std::move(xi));
    out.w.push_back(std::move(wi));
    out.y.push_back(std::move(yi));
  }
  return out;
}

}  // namespace gcr
