// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernelforge/protocol.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <iostream>

#include "kernelforge/task_io.hpp"

namespace kernelforge {

using nlohmann::json;

FdStream::FdStream(int fd, std::chrono::milliseconds timeout) : fd_(fd), timeout_(timeout) {}

FdStream::~FdStream() {
  if (fd_ >= 0) ::close(fd_);
}

void FdStream::write_all(std::span<const std::byte> data) {
  while (!data.empty()) {
    const auto n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ExecutorUnavailable(std::string("send failed: ") + std::strerror(errno));
    }
    data = data.subspan(static_cast<std::size_t>(n));
  }
}

std::size_t FdStream::read_some(std::span<std::byte> buffer) {
  pollfd pfd{fd_, POLLIN, 0};
  for (;;) {
    const int rc = ::poll(&pfd, 1, static_cast<int>(timeout_.count()));
    if (rc < 0 && errno == EINTR) continue;
    if (rc < 0) throw ExecutorUnavailable(std::string("poll failed: ") + std::strerror(errno));
    if (rc == 0) throw ExecutorUnavailable("timed out waiting for executor");
    break;
  }
  for (;;) {
    const auto n = ::recv(fd_, buffer.data(), buffer.size(), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n < 0) throw ExecutorUnavailable(std::string("recv failed: ") + std::strerror(errno));
    return static_cast<std::size_t>(n);
  }
}

std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> make_stream_pair(
    std::chrono::milliseconds timeout) {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
    throw std::runtime_error(std::string("socketpair: ") + std::strerror(errno));
  }
  return {std::make_unique<FdStream>(fds[0], timeout), std::make_unique<FdStream>(fds[1], timeout)};
}

namespace {

std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon + 1 == endpoint.size()) {
    throw ExecutorUnavailable("endpoint must be host:port, got '" + endpoint + "'");
  }
  auto host = endpoint.substr(0, colon);
  if (host.empty()) host = "127.0.0.1";
  return {host, endpoint.substr(colon + 1)};
}

}  // namespace

std::unique_ptr<ByteStream> connect_tcp(const std::string& endpoint,
                                        std::chrono::milliseconds timeout) {
  auto [host, port] = split_endpoint(endpoint);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw ExecutorUnavailable("resolve " + endpoint + ": " + ::gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
  for (auto* ai = res; ai; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      return std::make_unique<FdStream>(fd, timeout);
    }
    ::close(fd);
  }
  throw ExecutorUnavailable("cannot connect to executor at " + endpoint);
}

void write_frame(ByteStream& stream, const std::string& payload) {
  if (payload.size() > kMaxFrameBytes) throw ProtocolError("frame too large");
  const auto n = static_cast<std::uint32_t>(payload.size());
  const std::array<std::byte, 4> header{std::byte(n >> 24), std::byte(n >> 16), std::byte(n >> 8),
                                        std::byte(n)};
  stream.write_all(header);
  stream.write_all(std::as_bytes(std::span(payload.data(), payload.size())));
}

namespace {

// Reads exactly buffer.size() bytes; returns the count read before EOF.
std::size_t read_exact(ByteStream& stream, std::span<std::byte> buffer) {
  std::size_t got = 0;
  while (got < buffer.size()) {
    const auto n = stream.read_some(buffer.subspan(got));
    if (n == 0) break;
    got += n;
  }
  return got;
}

}  // namespace

std::optional<std::string> read_frame(ByteStream& stream) {
  std::array<std::byte, 4> header{};
  const auto h = read_exact(stream, header);
  if (h == 0) return std::nullopt;
  if (h < header.size()) throw ProtocolError("truncated frame header");
  const std::uint32_t n = (std::to_integer<std::uint32_t>(header[0]) << 24) |
                          (std::to_integer<std::uint32_t>(header[1]) << 16) |
                          (std::to_integer<std::uint32_t>(header[2]) << 8) |
                          std::to_integer<std::uint32_t>(header[3]);
  if (n > kMaxFrameBytes) throw ProtocolError("frame length " + std::to_string(n) + " exceeds limit");
  std::string payload(n, '\0');
  if (read_exact(stream, std::as_writable_bytes(std::span(payload.data(), payload.size()))) != n) {
    throw ProtocolError("truncated frame payload");
  }
  return payload;
}

json error_response(const std::string& code, const std::string& message) {
  return json{{"ok", false}, {"error", {{"code", code}, {"message", message}}}};
}

json ExecutorService::handle(const json& request) {
  if (!request.is_object() || !request.contains("op") || !request["op"].is_string()) {
    return error_response("bad_request", "request must be an object with a string 'op'");
  }
  const auto op = request["op"].get<std::string>();
  try {
    if (op == "hello") {
      const int version = request.value("version", -1);
      if (version != kProtocolVersion) {
        return error_response("version_mismatch",
                              "server speaks version " + std::to_string(kProtocolVersion));
      }
      return json{{"ok", true}, {"version", kProtocolVersion}, {"backend", backend_}};
    }
    if (op != "verify" && op != "profile" && op != "baselines" && op != "run") {
      return error_response("unsupported", "unsupported op '" + op + "'");
    }
    if (!request.contains("task")) return error_response("bad_request", "missing task");
    const auto task = task_from_json(request["task"]);
    const auto config = executor_config_from_json(request.value("config", json::object()));
    if (op == "baselines") {
      const auto b = executor_.baselines(task, config);
      return json{{"ok", true}, {"report", {{"eager_ms", b.eager_ms}, {"compile_ms", b.compile_ms}}}};
    }
    if (op == "run") {
      const auto seed = request.value("seed", std::uint64_t{0});
      json outputs = json::array();
      for (const auto& t : executor_.run_eager(task, seed)) outputs.push_back(tensor_to_json(t));
      return json{{"ok", true}, {"outputs", outputs}};
    }
    const auto candidate = candidate_from_json(request.value("candidate", json::object()));
    if (op == "verify") {
      const auto v = executor_.verify(task, candidate, config);
      return json{{"ok", true},
                  {"report",
                   {{"correct", v.all_passed()},
                    {"per_input_verdicts", v.verdicts},
                    {"failure_reason", v.failure_reason ? json(*v.failure_reason) : json(nullptr)}}}};
    }
    return json{{"ok", true}, {"report", report_to_json(executor_.measure(task, candidate, config))}};
  } catch (const DataError& e) {
    return error_response("bad_request", e.what());
  } catch (const ExecutorError& e) {
    return error_response("executor_error", e.what());
  } catch (const std::exception& e) {
    return error_response("executor_error", e.what());
  }
}

std::string ExecutorService::handle_payload(const std::string& payload) {
  json request;
  try {
    request = json::parse(payload);
  } catch (const json::parse_error& e) {
    return error_response("malformed", e.what()).dump();
  }
  return handle(request).dump();
}

void ExecutorService::serve(ByteStream& stream) {
  bool negotiated = false;
  for (;;) {
    std::optional<std::string> payload;
    try {
      payload = read_frame(stream);
    } catch (const ProtocolError& e) {
      write_frame(stream, error_response("malformed", e.what()).dump());
      return;
    }
    if (!payload) return;
    if (!negotiated) {
      json request = json::parse(*payload, nullptr, false);
      if (request.is_discarded()) {
        write_frame(stream, error_response("malformed", "invalid JSON").dump());
        continue;
      }
      if (!request.is_object() || request.value("op", std::string()) != "hello") {
        write_frame(stream,
                    error_response("version_mismatch", "negotiate with 'hello' first").dump());
        continue;
      }
      const auto response = handle(request);
      negotiated = response.value("ok", false);
      write_frame(stream, response.dump());
      continue;
    }
    write_frame(stream, handle_payload(*payload));
  }
}

void serve_tcp(const std::string& host, std::uint16_t port,
               const std::function<std::unique_ptr<Executor>()>& make_executor,
               std::optional<int> max_connections,
               const std::function<void(std::uint16_t)>& on_listening) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  FdStream listener(fd);  // closes on exit
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw std::runtime_error("bad listen address " + host);
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd, 8) != 0) {
    throw std::runtime_error(std::string("bind/listen: ") + std::strerror(errno));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  if (on_listening) on_listening(ntohs(addr.sin_port));
  for (int served = 0; !max_connections || served < *max_connections; ++served) {
    const int conn = ::accept(fd, nullptr, nullptr);
    if (conn < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("accept: ") + std::strerror(errno));
    }
    FdStream stream(conn, std::chrono::hours(1));
    auto executor = make_executor();
    ExecutorService service(*executor);
    try {
      service.serve(stream);
    } catch (const std::exception& e) {
      std::cerr << "executor connection closed: " << e.what() << '\n';
    }
  }
}

RemoteExecutor::RemoteExecutor(std::unique_ptr<ByteStream> stream) : stream_(std::move(stream)) {
  const auto hello = call_ok({{"op", "hello"}, {"version", kProtocolVersion}});
  backend_ = hello.value("backend", std::string("unknown"));
}

json RemoteExecutor::call(const json& request) {
  write_frame(*stream_, request.dump());
  std::optional<std::string> payload;
  try {
    payload = read_frame(*stream_);
  } catch (const ProtocolError& e) {
    throw ExecutorUnavailable(std::string("executor sent a bad frame: ") + e.what());
  }
  if (!payload) throw ExecutorUnavailable("executor closed the connection");
  try {
    return json::parse(*payload);
  } catch (const json::parse_error& e) {
    throw ExecutorUnavailable(std::string("executor sent malformed JSON: ") + e.what());
  }
}

json RemoteExecutor::call_ok(const json& request) {
  auto response = call(request);
  if (!response.value("ok", false)) {
    const auto err = response.value("error", json::object());
    throw ExecutorError(err.value("code", std::string("unknown")) + ": " +
                        err.value("message", std::string()));
  }
  return response;
}

Baselines RemoteExecutor::baselines(const OperatorTask& task, const ExecutorConfig& config) {
  const auto r = call_ok({{"op", "baselines"},
                          {"task", task_to_json(task)},
                          {"config", executor_config_to_json(config)}})["report"];
  return {r.at("eager_ms").get<double>(), r.at("compile_ms").get<double>()};
}

VerifyOutcome RemoteExecutor::verify(const OperatorTask& task, const KernelCandidate& candidate,
                                     const ExecutorConfig& config) {
  const auto r = call_ok({{"op", "verify"},
                          {"task", task_to_json(task)},
                          {"candidate", candidate_to_json(candidate)},
                          {"config", executor_config_to_json(config)}})["report"];
  VerifyOutcome out;
  const auto v = r.at("per_input_verdicts").get<std::vector<bool>>();
  for (std::size_t i = 0; i < out.verdicts.size() && i < v.size(); ++i) out.verdicts[i] = v[i];
  if (r.contains("failure_reason") && !r["failure_reason"].is_null()) {
    out.failure_reason = r["failure_reason"].get<std::string>();
  }
  return out;
}

MeasurementReport RemoteExecutor::measure(const OperatorTask& task,
                                          const KernelCandidate& candidate,
                                          const ExecutorConfig& config) {
  return report_from_json(call_ok({{"op", "profile"},
                                   {"task", task_to_json(task)},
                                   {"candidate", candidate_to_json(candidate)},
                                   {"config", executor_config_to_json(config)}})["report"]);
}

std::vector<Tensor> RemoteExecutor::run_eager(const OperatorTask& task, std::uint64_t seed) {
  const auto r = call_ok({{"op", "run"}, {"task", task_to_json(task)}, {"seed", seed}});
  std::vector<Tensor> out;
  for (const auto& t : r.at("outputs")) out.push_back(tensor_from_json(t));
  return out;
}

}  // namespace kernelforge
