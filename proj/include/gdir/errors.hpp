#pragma once

#include <stdexcept>
#include <string>

namespace gdir {

// Exit-code mapping used by the CLI: validation/parse -> 1, io -> 2, numeric -> 3.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

class parse_error : public validation_error {
public:
    explicit parse_error(const std::string& msg) : validation_error(msg) {}
};

class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace gdir
