// errors.hpp - exception hierarchy shared by the whole toolkit.
//
// Every failure is reported by throwing; nothing here returns error codes.
// The categories matter to callers (the CLI maps them to distinct messages
// and a nonzero exit), so keep them coarse and stable.
#pragma once

#include <stdexcept>
#include <string>

namespace lesionuq {

// Root of the hierarchy. Catch this to handle anything thrown by lesionuq.
class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// A value or combination of values violates a documented invariant
// (negative variance, probability outside [0,1], NaN anywhere, dimension
// mismatch between grids, ...).
class validation_error : public error {
public:
    explicit validation_error(const std::string& msg) : error(msg) {}
};

// A caller passed an argument outside its documented domain (eta outside
// [0,1], zero samples requested, unknown measure name, ...).
class argument_error : public error {
public:
    explicit argument_error(const std::string& msg) : error(msg) {}
};

// A byte stream claiming to be one of our formats is malformed: bad magic,
// unsupported version, unknown kind byte.
class format_error : public error {
public:
    explicit format_error(const std::string& msg) : error(msg) {}
};

// A byte stream is well-formed so far but shorter or longer than its own
// header promises.
class truncation_error : public format_error {
public:
    explicit truncation_error(const std::string& msg) : format_error(msg) {}
};

// The operating system refused an open/read/write. Message carries the path.
class io_error : public error {
public:
    explicit io_error(const std::string& msg) : error(msg) {}
};

// A bounded random search failed to satisfy its constraints (for example
// lesion placement ran out of retries in a crowded volume).
class generation_error : public error {
public:
    explicit generation_error(const std::string& msg) : error(msg) {}
};

// Optimisation blew up: a non-finite loss or weight appeared.
class training_error : public error {
public:
    explicit training_error(const std::string& msg) : error(msg) {}
};

} // namespace lesionuq
