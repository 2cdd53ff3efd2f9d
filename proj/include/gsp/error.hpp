#pragma once

#include <stdexcept>
#include <string>

namespace gsp {

// Each error maps to a distinct CLI exit code (see cli.hpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotStabilizable : public Error {
public:
    using Error::Error;
};

class InfeasibleParams : public Error {
public:
    using Error::Error;
};

class ConfigInvalid : public Error {
public:
    using Error::Error;
};

class InvalidWeights : public Error {
public:
    using Error::Error;
};

class NoCompletedJobs : public Error {
public:
    NoCompletedJobs() : Error("episode has no completed jobs") {}
};

class NoFeasibleCandidate : public Error {
public:
    using Error::Error;
};

class MissingBaseline : public Error {
public:
    using Error::Error;
};

}  // namespace gsp
