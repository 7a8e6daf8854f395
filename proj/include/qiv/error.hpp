#pragma once

#include <stdexcept>
#include <string>

namespace qiv {

enum class ErrorKind {
    Config,        // bad options or malformed request
    Data,          // malformed or degenerate input data
    Domain,        // argument outside the mathematical domain
    WeakQiv,       // relevance of the QIV too weak to identify
    Positivity,    // a propensity or relevance denominator too close to zero
    Separation,    // logistic fit diverging
    RankDeficient, // design without full column rank
    Numerical,     // solver failure that should not happen
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

const char* to_string(ErrorKind kind) noexcept;

}  // namespace qiv
