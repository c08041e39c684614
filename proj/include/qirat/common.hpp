// Copyright 2026-present the qirat project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace qirat {

/// Caller passed something that violates an operation's precondition.
class InvalidArgument : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

/// Operation is not valid in the object's current state (e.g. untrained index).
class StateError : public std::logic_error {
 public:
    using std::logic_error::logic_error;
};

enum class FormatErrorKind {
    kBadMagic,
    kUnsupportedVersion,
    kTruncated,
    kOverflow,
    kCorrupt,
    kIo,
};

inline const char*
to_string(FormatErrorKind kind) {
    switch (kind) {
        case FormatErrorKind::kBadMagic:
            return "bad magic";
        case FormatErrorKind::kUnsupportedVersion:
            return "unsupported version";
        case FormatErrorKind::kTruncated:
            return "truncated payload";
        case FormatErrorKind::kOverflow:
            return "count/dim overflow";
        case FormatErrorKind::kCorrupt:
            return "corrupt payload";
        case FormatErrorKind::kIo:
            return "i/o error";
    }
    return "unknown";
}

/// Raised by every on-disk reader; `kind()` tells the failure classes apart.
class FormatError : public std::runtime_error {
 public:
    FormatError(FormatErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {
    }

    FormatErrorKind
    kind() const noexcept {
        return kind_;
    }

 private:
    FormatErrorKind kind_;
};

}  // namespace qirat
