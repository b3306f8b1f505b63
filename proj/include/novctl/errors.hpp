#pragma once

#include <stdexcept>
#include <string>

namespace novctl {

/// A numeric quantity overflowed or became NaN.
class NonFinite : public std::runtime_error {
public:
    NonFinite(std::string component, double t, const std::string& detail = {})
        : std::runtime_error("non-finite " + component + " at t = " + std::to_string(t) +
                             (detail.empty() ? "" : " (" + detail + ")")),
          component_(std::move(component)),
          t_(t) {}

    const std::string& component() const noexcept { return component_; }
    double time() const noexcept { return t_; }

private:
    std::string component_;
    double t_;
};

}  // namespace novctl
