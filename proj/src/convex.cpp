#include "jccmdp/convex.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace jccmdp {

std::string to_string(SolveStatus s) {
    switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Unbounded: return "Unbounded";
    case SolveStatus::NumericalFailure: return "NumericalFailure";
    }
    return "Unknown";
}

int ConvexProgram::add_variable(std::string name, double lb, double ub) {
    if (lb > ub) throw std::invalid_argument("variable '" + name + "': lb > ub");
    names_.push_back(std::move(name));
    lb_.push_back(lb);
    ub_.push_back(ub);
    return static_cast<int>(names_.size()) - 1;
}

void ConvexProgram::check(const AffineScalar& e) const {
    const int n = num_variables();
    for (int v : e.vars)
        if (v < 0 || v >= n)
            throw std::invalid_argument("affine expression references undeclared variable");
    for (double c : e.coefs)
        if (!std::isfinite(c))
            throw std::invalid_argument("affine expression has non-finite coefficient");
    if (!std::isfinite(e.constant))
        throw std::invalid_argument("affine expression has non-finite constant");
}

int ConvexProgram::add_linear_eq(AffineScalar expr, double rhs) {
    expr.constant -= rhs;
    check(expr);
    linear_.push_back({std::move(expr), true});
    return static_cast<int>(linear_.size()) - 1;
}

int ConvexProgram::add_linear_le(AffineScalar expr, double rhs) {
    expr.constant -= rhs;
    check(expr);
    linear_.push_back({std::move(expr), false});
    return static_cast<int>(linear_.size()) - 1;
}

int ConvexProgram::add_soc_constraint(AffineVec vec, AffineScalar rhs) {
    for (const auto& row : vec) check(row);
    check(rhs);
    soc_.push_back({std::move(vec), std::move(rhs)});
    return static_cast<int>(soc_.size()) - 1;
}

int ConvexProgram::add_lse_constraint(std::vector<LseGroup> groups, AffineScalar rhs,
                                      AffineScalar offset) {
    for (const auto& g : groups) {
        if (g.weights.size() != g.exponents.size())
            throw std::invalid_argument("lse group: weights/exponents size mismatch");
        if (g.weights.empty())
            throw std::invalid_argument("lse group: empty");
        for (double w : g.weights)
            if (!(w > 0.0) || !std::isfinite(w))
                throw std::invalid_argument("lse group: weights must be strictly positive");
        for (const auto& e : g.exponents) check(e);
    }
    check(rhs);
    check(offset);
    lse_.push_back({std::move(groups), std::move(offset), std::move(rhs)});
    return static_cast<int>(lse_.size()) - 1;
}

namespace {

void print_affine(std::ostream& os, const AffineScalar& e,
                  const std::vector<std::string>& names) {
    bool first = true;
    for (std::size_t i = 0; i < e.vars.size(); ++i) {
        double c = e.coefs[i];
        if (!first && c >= 0) os << " + ";
        if (!first && c < 0) { os << " - "; c = -c; }
        os << c << "*" << names[e.vars[i]];
        first = false;
    }
    if (first) {
        os << e.constant;
    } else if (e.constant != 0.0) {
        os << (e.constant > 0 ? " + " : " - ") << std::abs(e.constant);
    }
}

} // namespace

void ConvexProgram::dump(std::ostream& os) const {
    os << "min ";
    print_affine(os, objective_, names_);
    os << "\n";
    for (int v = 0; v < num_variables(); ++v) {
        if (lb_[v] != -kInf || ub_[v] != kInf)
            os << "bound " << lb_[v] << " <= " << names_[v] << " <= " << ub_[v] << "\n";
    }
    for (const auto& c : linear_) {
        os << (c.equality ? "eq  " : "le  ");
        print_affine(os, c.expr, names_);
        os << (c.equality ? " == 0\n" : " <= 0\n");
    }
    for (const auto& c : soc_) {
        os << "soc ||(";
        for (std::size_t i = 0; i < c.vec.size(); ++i) {
            if (i) os << "; ";
            print_affine(os, c.vec[i], names_);
        }
        os << ")|| <= ";
        print_affine(os, c.rhs, names_);
        os << "\n";
    }
    for (const auto& c : lse_) {
        os << "lse ";
        for (std::size_t g = 0; g < c.groups.size(); ++g) {
            if (g) os << " + ";
            os << "ln(";
            for (std::size_t j = 0; j < c.groups[g].weights.size(); ++j) {
                if (j) os << " + ";
                os << c.groups[g].weights[j] << "*exp(";
                print_affine(os, c.groups[g].exponents[j], names_);
                os << ")";
            }
            os << ")";
        }
        if (!c.offset.vars.empty() || c.offset.constant != 0.0) {
            os << " + ";
            print_affine(os, c.offset, names_);
        }
        os << " <= ";
        print_affine(os, c.rhs, names_);
        os << "\n";
    }
}

double ConvexProgram::max_violation(const Vec& x) const {
    double worst = 0.0;
    for (int v = 0; v < num_variables(); ++v) {
        if (lb_[v] != -kInf) worst = std::max(worst, lb_[v] - x[v]);
        if (ub_[v] != kInf) worst = std::max(worst, x[v] - ub_[v]);
    }
    for (const auto& c : linear_) {
        const double r = c.expr.eval(x);
        worst = std::max(worst, c.equality ? std::abs(r) : r);
    }
    for (const auto& c : soc_) {
        double nrm2 = 0.0;
        for (const auto& row : c.vec) {
            const double v = row.eval(x);
            nrm2 += v * v;
        }
        worst = std::max(worst, std::sqrt(nrm2) - c.rhs.eval(x));
    }
    for (const auto& c : lse_) {
        double f = c.offset.eval(x) - c.rhs.eval(x);
        for (const auto& g : c.groups) {
            double mx = -kInf;
            for (const auto& e : g.exponents) mx = std::max(mx, e.eval(x));
            double s = 0.0;
            for (std::size_t j = 0; j < g.weights.size(); ++j)
                s += g.weights[j] * std::exp(g.exponents[j].eval(x) - mx);
            f += mx + std::log(s);
        }
        worst = std::max(worst, f);
    }
    return worst;
}

} // namespace jccmdp
