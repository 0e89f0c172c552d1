// ----------------------------------------------------------------------------
// Copyright 2026 The semocc Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ----------------------------------------------------------------------------

#pragma once

#include <stdexcept>
#include <string>

namespace semocc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SEMOCC_DEFINE_ERROR(Name)                      \
    class Name : public Error {                        \
    public:                                            \
        using Error::Error;                            \
        explicit Name() : Error(#Name) {}              \
    }

SEMOCC_DEFINE_ERROR(DegenerateRotation);
SEMOCC_DEFINE_ERROR(InvalidGradient);
SEMOCC_DEFINE_ERROR(InvalidSampleCount);
SEMOCC_DEFINE_ERROR(InvalidLoss);
SEMOCC_DEFINE_ERROR(InvalidArgument);
SEMOCC_DEFINE_ERROR(EmptyMask);
SEMOCC_DEFINE_ERROR(MissingAttribute);
SEMOCC_DEFINE_ERROR(OutOfOrderFrame);
SEMOCC_DEFINE_ERROR(ShapeMismatch);
SEMOCC_DEFINE_ERROR(EmptyRaySet);
SEMOCC_DEFINE_ERROR(SchemaError);
SEMOCC_DEFINE_ERROR(DivergenceError);

// File format errors. Each corruption mode has its own type so callers can
// tell a wrong file apart from a damaged one.
SEMOCC_DEFINE_ERROR(FormatError);

class BadMagic : public FormatError {
public:
    using FormatError::FormatError;
};
class VersionMismatch : public FormatError {
public:
    using FormatError::FormatError;
};
class TruncatedPayload : public FormatError {
public:
    using FormatError::FormatError;
};
class NonFiniteValue : public FormatError {
public:
    using FormatError::FormatError;
};

#undef SEMOCC_DEFINE_ERROR

}  // namespace semocc
