// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "kernelforge/executor.hpp"

namespace kernelforge {

// Executor wire protocol.
//
// Frames: 4-byte big-endian payload length, then a UTF-8 JSON object.
// The client opens with {"op":"hello","version":1}; the server answers
// {"ok":true,"version":1,"backend":...}. Requests then carry
// {op: verify|profile|baselines|run, task, candidate?, config?, seed?}.
// Responses are {"ok":true,"report":{...MeasurementReport fields}} (or
// {"ok":true,"outputs":[...]} for run), and failures are
// {"ok":false,"error":{"code","message"}} with code one of
// unsupported | malformed | bad_request | version_mismatch | executor_error.

inline constexpr int kProtocolVersion = 1;
inline constexpr std::uint32_t kMaxFrameBytes = 64u << 20;

/// Peer unreachable, timed out, or hung up mid-conversation.
class ExecutorUnavailable : public ExecutorError {
 public:
  using ExecutorError::ExecutorError;
};

/// Framing violation on the receiving side.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bidirectional byte stream.
class ByteStream {
 public:
  virtual ~ByteStream() = default;
  virtual void write_all(std::span<const std::byte> data) = 0;
  /// Returns 0 at end of stream. Throws ExecutorUnavailable on timeout.
  virtual std::size_t read_some(std::span<std::byte> buffer) = 0;
};

/// Socket-backed stream; owns the descriptor.
class FdStream final : public ByteStream {
 public:
  explicit FdStream(int fd, std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~FdStream() override;
  FdStream(const FdStream&) = delete;
  FdStream& operator=(const FdStream&) = delete;

  void write_all(std::span<const std::byte> data) override;
  std::size_t read_some(std::span<std::byte> buffer) override;

 private:
  int fd_;
  std::chrono::milliseconds timeout_;
};

/// Connected in-process pair (socketpair), for loopback use.
std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> make_stream_pair(
    std::chrono::milliseconds timeout = std::chrono::seconds(30));

/// Connects to "host:port". Throws ExecutorUnavailable.
std::unique_ptr<ByteStream> connect_tcp(const std::string& endpoint,
                                        std::chrono::milliseconds timeout = std::chrono::seconds(30));

void write_frame(ByteStream& stream, const std::string& payload);
/// nullopt on clean end of stream before a header; ProtocolError on a
/// truncated or oversized frame.
std::optional<std::string> read_frame(ByteStream& stream);

/// Stateless request handler around an executor. Never throws.
class ExecutorService {
 public:
  explicit ExecutorService(Executor& executor, std::string backend = "simulated")
      : executor_(executor), backend_(std::move(backend)) {}

  nlohmann::json handle(const nlohmann::json& request);
  /// Parses a raw frame payload; malformed JSON yields a "malformed" error.
  std::string handle_payload(const std::string& payload);

  /// Serves frames until the peer closes the stream.
  void serve(ByteStream& stream);

 private:
  Executor& executor_;
  std::string backend_;
};

nlohmann::json error_response(const std::string& code, const std::string& message);

/// Accepts TCP connections on host:port and serves each with a fresh
/// executor from `make_executor`, one connection at a time. Serves at most
/// `max_connections` when set. `on_listening` receives the bound port.
void serve_tcp(const std::string& host, std::uint16_t port,
               const std::function<std::unique_ptr<Executor>()>& make_executor,
               std::optional<int> max_connections = std::nullopt,
               const std::function<void(std::uint16_t)>& on_listening = {});

/// Executor proxy speaking the wire protocol. Negotiates the version on
/// construction.
class RemoteExecutor final : public Executor {
 public:
  explicit RemoteExecutor(std::unique_ptr<ByteStream> stream);

  Baselines baselines(const OperatorTask& task, const ExecutorConfig& config) override;
  VerifyOutcome verify(const OperatorTask& task, const KernelCandidate& candidate,
                       const ExecutorConfig& config) override;
  MeasurementReport measure(const OperatorTask& task, const KernelCandidate& candidate,
                            const ExecutorConfig& config) override;
  std::vector<Tensor> run_eager(const OperatorTask& task, std::uint64_t seed) override;

  const std::string& backend() const { return backend_; }

  /// Sends one request, returns the response (errors included).
  nlohmann::json call(const nlohmann::json& request);

 private:
  nlohmann::json call_ok(const nlohmann::json& request);

  std::unique_ptr<ByteStream> stream_;
  std::string backend_;
};

}  // namespace kernelforge
