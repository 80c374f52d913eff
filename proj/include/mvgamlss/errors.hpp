#pragma once

#include <stdexcept>
#include <string>

namespace mvgamlss {

// Distribution parameter outside its declared domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Malformed argument to a numerical routine (wrong size, non-finite input, ...).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Operation called outside its contract, e.g. left limits on a continuous family.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Model specification or dataset rejected during validation. The message
// names the offending field or row.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mvgamlss
