// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace silocomm {

// Base for all library errors. `kind()` is a stable machine-readable tag
// surfaced in CLI error records; `what()` is the human-readable message.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(msg), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

// Deserialization failed; `offset` is the byte offset where parsing stopped.
class MalformedPayloadError : public Error {
public:
    MalformedPayloadError(std::size_t offset, const std::string& msg)
        : Error("malformed-payload", msg + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

// join() called on a StoreKey envelope without the payload blob.
class IncompleteMessageError : public Error {
public:
    explicit IncompleteMessageError(const std::string& msg)
        : Error("incomplete-message", msg) {}
};

// Reconstructed payload does not match the envelope's declared size/digest.
class IntegrityError : public Error {
public:
    explicit IntegrityError(const std::string& msg) : Error("integrity-mismatch", msg) {}
};

class MissingObjectError : public Error {
public:
    explicit MissingObjectError(const std::string& msg) : Error("missing-object", msg) {}
};

class CorruptObjectError : public Error {
public:
    explicit CorruptObjectError(const std::string& msg) : Error("corrupt-object", msg) {}
};

// Transient store failure; get()/put() retry these per RetryPolicy.
class StoreUnreachableError : public Error {
public:
    explicit StoreUnreachableError(const std::string& msg)
        : Error("store-unreachable", msg) {}
};

class CapacityExceededError : public Error {
public:
    explicit CapacityExceededError(const std::string& msg)
        : Error("capacity-exceeded", msg) {}
};

class UnknownProfileError : public Error {
public:
    explicit UnknownProfileError(const std::string& msg) : Error("unknown-profile", msg) {}
};

class PeerUnreachableError : public Error {
public:
    explicit PeerUnreachableError(const std::string& msg)
        : Error("peer-unreachable", msg) {}
};

class SendTimeoutError : public Error {
public:
    explicit SendTimeoutError(const std::string& msg) : Error("send-timeout", msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error("config-error", msg) {}
};

}  // namespace silocomm
