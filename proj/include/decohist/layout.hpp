#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "decohist/errors.hpp"

namespace decohist {

/// One tensor factor of a product Hilbert space.
struct Factor {
    std::string label;
    std::size_t dim = 0;

    bool operator==(const Factor&) const = default;
};

/// Labeled tensor-product basis layout.
///
/// Basis indices are mixed-radix numbers over the factor dimensions, with the
/// first listed factor as the most significant digit. This matches the usual
/// Kronecker-product ordering: kron(A, B) indexes as i_A * dim_B + i_B.
class SpaceLayout {
public:
    explicit SpaceLayout(std::vector<Factor> factors) : factors_(std::move(factors)) {
        if (factors_.empty()) throw LayoutError("layout needs at least one factor");
        std::unordered_set<std::string> seen;
        total_dim_ = 1;
        for (const auto& f : factors_) {
            if (f.dim < 1) throw LayoutError("factor '" + f.label + "' has dimension 0");
            if (!seen.insert(f.label).second)
                throw LayoutError("duplicate factor label '" + f.label + "'");
            total_dim_ *= f.dim;
        }
    }

    const std::vector<Factor>& factors() const { return factors_; }
    std::size_t factor_count() const { return factors_.size(); }
    std::size_t total_dim() const { return total_dim_; }

    std::size_t position_of(const std::string& label) const {
        for (std::size_t i = 0; i < factors_.size(); ++i)
            if (factors_[i].label == label) return i;
        throw LayoutError("no factor labeled '" + label + "'");
    }

    /// Mixed-radix digits of a flat basis index, one digit per factor.
    std::vector<std::size_t> digits_of(std::size_t index) const {
        if (index >= total_dim_) throw LayoutError("basis index out of range");
        std::vector<std::size_t> digits(factors_.size());
        for (std::size_t i = factors_.size(); i-- > 0;) {
            digits[i] = index % factors_[i].dim;
            index /= factors_[i].dim;
        }
        return digits;
    }

    std::size_t index_of(std::span<const std::size_t> digits) const {
        if (digits.size() != factors_.size())
            throw LayoutError("digit tuple length does not match factor count");
        std::size_t index = 0;
        for (std::size_t i = 0; i < factors_.size(); ++i) {
            if (digits[i] >= factors_[i].dim) throw LayoutError("digit out of range");
            index = index * factors_[i].dim + digits[i];
        }
        return index;
    }

    /// Concatenated layout; labels must stay disjoint.
    static SpaceLayout concat(const SpaceLayout& a, const SpaceLayout& b) {
        std::vector<Factor> factors = a.factors_;
        factors.insert(factors.end(), b.factors_.begin(), b.factors_.end());
        return SpaceLayout(std::move(factors));
    }

    bool operator==(const SpaceLayout&) const = default;

private:
    std::vector<Factor> factors_;
    std::size_t total_dim_ = 0;
};

/// Convenience: a layout with a single factor.
inline SpaceLayout single_factor(std::string label, std::size_t dim) {
    return SpaceLayout({Factor{std::move(label), dim}});
}

} // namespace decohist
