#pragma once

// Simulated communicator: a full mesh of local stream sockets between ranks.
// Works between threads of one process or across fork()ed rank processes;
// a dead peer shows up as EOF and raises CommError.

#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "openchk/bytes.hpp"
#include "openchk/error.hpp"

namespace openchk {

class Communicator {
 public:
  virtual ~Communicator() = default;

  virtual int rank() const = 0;
  virtual int size() const = 0;
  virtual void send(int dest, std::span<const std::byte> data) = 0;
  virtual Bytes recv(int src) = 0;
  // Sends to `dest` while receiving from `src`; never deadlocks on large messages.
  virtual Bytes sendrecv(int dest, std::span<const std::byte> data, int src) = 0;

  // Root collects one message per rank, in rank order. Non-roots get an empty vector.
  std::vector<Bytes> gather(int root, std::span<const std::byte> data) {
    std::vector<Bytes> out;
    if (rank() != root) {
      send(root, data);
      return out;
    }
    out.resize(static_cast<std::size_t>(size()));
    for (int r = 0; r < size(); ++r)
      out[static_cast<std::size_t>(r)] = r == root ? Bytes(data.begin(), data.end()) : recv(r);
    return out;
  }

  Bytes broadcast(int root, std::span<const std::byte> data) {
    if (rank() != root) return recv(root);
    for (int r = 0; r < size(); ++r)
      if (r != root) send(r, data);
    return Bytes(data.begin(), data.end());
  }

  void barrier() {
    gather(0, {});
    broadcast(0, {});
  }

  bool allreduce_and(bool vote) {
    const std::byte mine{static_cast<unsigned char>(vote ? 1 : 0)};
    const auto votes = gather(0, std::span(&mine, 1));
    std::byte all{1};
    for (const auto& v : votes)
      if (v.size() != 1 || v[0] != std::byte{1}) all = std::byte{0};
    return broadcast(0, std::span(&all, 1)).at(0) == std::byte{1};
  }

  std::uint64_t broadcast_u64(int root, std::uint64_t value) {
    Bytes buf;
    put_le<std::uint64_t>(buf, value);
    return get_le<std::uint64_t>(broadcast(root, buf), 0);
  }
};

class SocketComm final : public Communicator {
 public:
  SocketComm(int rank, std::vector<int> peer_fds) : rank_(rank), fds_(std::move(peer_fds)) {}
  SocketComm(const SocketComm&) = delete;
  SocketComm& operator=(const SocketComm&) = delete;
  ~SocketComm() override {
    for (int fd : fds_)
      if (fd >= 0) ::close(fd);
  }

  int rank() const override { return rank_; }
  int size() const override { return static_cast<int>(fds_.size()); }

  void send(int dest, std::span<const std::byte> data) override {
    if (dest == rank_) {
      loopback_.emplace_back(data.begin(), data.end());
      return;
    }
    Bytes frame;
    put_le<std::uint64_t>(frame, data.size());
    write_all(dest, frame);
    write_all(dest, data);
  }

  Bytes recv(int src) override {
    if (src == rank_) {
      if (loopback_.empty()) throw CommError("receive from self with nothing sent");
      auto out = std::move(loopback_.front());
      loopback_.erase(loopback_.begin());
      return out;
    }
    Bytes header(8);
    read_all(src, header);
    Bytes data(get_le<std::uint64_t>(header, 0));
    read_all(src, data);
    return data;
  }

  Bytes sendrecv(int dest, std::span<const std::byte> data, int src) override {
    if (dest == rank_ && src == rank_) return Bytes(data.begin(), data.end());
    if (dest == rank_ || src == rank_) {
      send(dest, data);
      return recv(src);
    }
    Bytes out_frame;
    put_le<std::uint64_t>(out_frame, data.size());
    append(out_frame, data);
    std::size_t sent = 0;
    Bytes header(8), in;
    std::size_t got = 0;
    bool have_header = false;
    for (;;) {
      const bool send_done = sent == out_frame.size();
      const bool recv_done = have_header && got == in.size();
      if (send_done && recv_done) return in;
      pollfd pfds[2];
      nfds_t n = 0;
      if (!send_done) pfds[n++] = {fd(dest), POLLOUT, 0};
      if (!recv_done) pfds[n++] = {fd(src), POLLIN, 0};
      if (::poll(pfds, n, -1) < 0) {
        if (errno == EINTR) continue;
        throw CommError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (!send_done) {
        const auto w = ::send(fd(dest), out_frame.data() + sent, out_frame.size() - sent, MSG_DONTWAIT | MSG_NOSIGNAL);
        if (w > 0) sent += static_cast<std::size_t>(w);
        else if (w < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) fail_io("send to", dest);
      }
      if (!recv_done) {
        auto& target = have_header ? in : header;
        const auto r = ::recv(fd(src), target.data() + got, target.size() - got, MSG_DONTWAIT);
        if (r == 0 && target.size() != got) throw CommError("rank " + std::to_string(src) + " closed the connection");
        if (r > 0) got += static_cast<std::size_t>(r);
        else if (r < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) fail_io("receive from", src);
        if (!have_header && got == 8) {
          have_header = true;
          in.resize(get_le<std::uint64_t>(header, 0));
          got = 0;
        }
      }
    }
  }

 private:
  int fd(int peer) const {
    if (peer < 0 || peer >= size()) throw CommError("rank " + std::to_string(peer) + " out of range");
    return fds_[static_cast<std::size_t>(peer)];
  }

  [[noreturn]] void fail_io(const char* what, int peer) const {
    throw CommError(std::string(what) + " rank " + std::to_string(peer) + " failed: " + std::strerror(errno));
  }

  void write_all(int peer, std::span<const std::byte> data) {
    std::size_t done = 0;
    while (done < data.size()) {
      const auto w = ::send(fd(peer), data.data() + done, data.size() - done, MSG_NOSIGNAL);
      if (w < 0) {
        if (errno == EINTR) continue;
        fail_io("send to", peer);
      }
      done += static_cast<std::size_t>(w);
    }
  }

  void read_all(int peer, std::span<std::byte> data) {
    std::size_t done = 0;
    while (done < data.size()) {
      const auto r = ::recv(fd(peer), data.data() + done, data.size() - done, 0);
      if (r == 0) throw CommError("rank " + std::to_string(peer) + " closed the connection");
      if (r < 0) {
        if (errno == EINTR) continue;
        fail_io("receive from", peer);
      }
      done += static_cast<std::size_t>(r);
    }
  }

  int rank_;
  std::vector<int> fds_;  // indexed by peer rank; -1 for self
  std::vector<Bytes> loopback_;
};

// Creates a fully connected world of `n` ranks. Element r is rank r's endpoint
// and owns its sockets; destroying an endpoint disconnects that rank.
inline std::vector<std::unique_ptr<SocketComm>> make_socket_world(int n) {
  if (n <= 0) throw CommError("world size must be positive");
  std::vector<std::vector<int>> fds(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n), -1));
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      int pair[2];
      if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, pair) != 0) {
        for (auto& row : fds)
          for (int fd : row)
            if (fd >= 0) ::close(fd);
        throw CommError(std::string("socketpair failed: ") + std::strerror(errno));
      }
      fds[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = pair[0];
      fds[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)] = pair[1];
    }
  }
  std::vector<std::unique_ptr<SocketComm>> world;
  for (int r = 0; r < n; ++r) world.push_back(std::make_unique<SocketComm>(r, std::move(fds[static_cast<std::size_t>(r)])));
  return world;
}

}  // namespace openchk
