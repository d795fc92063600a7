#pragma once

#include <stdexcept>
#include <string>

namespace fedrac {

// Exit-code classes used by the CLI: usage/precondition problems, an
// unassignable participant, and malformed or missing input data.
enum class ErrorKind { Invalid, Infeasible, Data };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(ErrorKind::Invalid, what) {}
};

class InfeasibleError : public Error {
public:
    InfeasibleError(std::string participant, const std::string& what)
        : Error(ErrorKind::Infeasible, what), participant_(std::move(participant)) {}
    const std::string& participant() const noexcept { return participant_; }

private:
    std::string participant_;
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgument(msg);
}

}  // namespace fedrac
