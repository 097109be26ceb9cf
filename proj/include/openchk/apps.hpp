#pragma once

// Deterministic demo kernels run by the harness: a 2-D heat stencil with
// row-block decomposition and an all-pairs N-body solver with ring exchange.

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "openchk/bytes.hpp"
#include "openchk/comm.hpp"
#include "openchk/error.hpp"

namespace openchk {

class DemoApp {
 public:
  virtual ~DemoApp() = default;
  virtual void step(Communicator& comm) = 0;
  // The rank's protected block.
  virtual std::span<double> state() = 0;
};

// Jacobi sweep of the 5-point stencil on a rows x cols grid. Rows are split
// across ranks; the outermost ring of cells is a fixed boundary.
class Heat2d final : public DemoApp {
 public:
  Heat2d(int rank, int world, std::size_t rows, std::size_t cols, std::uint64_t seed)
      : rows_(rows), cols_(cols), rank_(rank), world_(world) {
    if (world <= 0 || rows < static_cast<std::size_t>(world) || cols == 0)
      throw HarnessError("heat2d needs at least one grid row per rank");
    const auto base = rows / static_cast<std::size_t>(world), extra = rows % static_cast<std::size_t>(world);
    const auto r = static_cast<std::size_t>(rank);
    first_row_ = r * base + std::min(r, extra);
    local_rows_ = base + (r < extra ? 1 : 0);
    // Generate the whole field so the result does not depend on the rank count.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 100.0);
    grid_.resize(local_rows_ * cols_);
    for (std::size_t gi = 0; gi < rows_; ++gi)
      for (std::size_t j = 0; j < cols_; ++j) {
        const double v = dist(rng);
        if (gi >= first_row_ && gi < first_row_ + local_rows_) grid_[(gi - first_row_) * cols_ + j] = v;
      }
  }

  // Uniform field, used by the fixed-point check.
  Heat2d(int rank, int world, std::size_t rows, std::size_t cols, double value)
      : Heat2d(rank, world, rows, cols, std::uint64_t{0}) {
    std::fill(grid_.begin(), grid_.end(), value);
  }

  void step(Communicator& comm) override {
    std::vector<double> up(cols_), down(cols_);
    exchange_halos(comm, up, down);
    std::vector<double> next = grid_;
    for (std::size_t i = 0; i < local_rows_; ++i) {
      const auto gi = first_row_ + i;
      if (gi == 0 || gi + 1 == rows_) continue;
      const double* above = i == 0 ? up.data() : &grid_[(i - 1) * cols_];
      const double* below = i + 1 == local_rows_ ? down.data() : &grid_[(i + 1) * cols_];
      const double* row = &grid_[i * cols_];
      for (std::size_t j = 1; j + 1 < cols_; ++j)
        next[i * cols_ + j] = 0.25 * (above[j] + below[j] + row[j - 1] + row[j + 1]);
    }
    grid_.swap(next);
  }

  std::span<double> state() override { return grid_; }
  std::size_t first_row() const { return first_row_; }
  std::size_t local_rows() const { return local_rows_; }

 private:
  static Bytes pack(std::span<const double> row) {
    const auto raw = std::as_bytes(row);
    return Bytes(raw.begin(), raw.end());
  }
  static void unpack(const Bytes& data, std::vector<double>& row) {
    if (data.size() != row.size() * sizeof(double)) throw CommError("halo row has the wrong length");
    std::memcpy(row.data(), data.data(), data.size());
  }

  void exchange_halos(Communicator& comm, std::vector<double>& up, std::vector<double>& down) {
    const bool has_up = rank_ > 0, has_down = rank_ + 1 < world_;
    const auto top = std::span<const double>(grid_.data(), cols_);
    const auto bottom = std::span<const double>(grid_.data() + (local_rows_ - 1) * cols_, cols_);
    // Top rows travel up, then bottom rows travel down.
    if (has_up && has_down) unpack(comm.sendrecv(rank_ - 1, pack(top), rank_ + 1), down);
    else if (has_up) comm.send(rank_ - 1, pack(top));
    else if (has_down) unpack(comm.recv(rank_ + 1), down);
    if (has_up && has_down) unpack(comm.sendrecv(rank_ + 1, pack(bottom), rank_ - 1), up);
    else if (has_down) comm.send(rank_ + 1, pack(bottom));
    else if (has_up) unpack(comm.recv(rank_ - 1), up);
  }

  std::size_t rows_, cols_;
  int rank_, world_;
  std::size_t first_row_ = 0, local_rows_ = 0;
  std::vector<double> grid_;
};

// Gravitational all-pairs forces with softening. Each rank owns a block of
// particles; remote blocks are passed around a ring.
class NBody final : public DemoApp {
 public:
  static constexpr std::size_t kFields = 7;  // x y z vx vy vz m
  static constexpr double kDt = 0.01;
  static constexpr double kSoftening = 1e-3;

  NBody(int rank, int world, std::size_t per_rank, std::uint64_t seed) : rank_(rank), world_(world) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos(-1.0, 1.0), vel(-0.1, 0.1), mass(0.5, 1.5);
    const auto total = per_rank * static_cast<std::size_t>(world);
    const auto first = per_rank * static_cast<std::size_t>(rank);
    particles_.resize(per_rank * kFields);
    for (std::size_t p = 0; p < total; ++p) {
      const double v[kFields] = {pos(rng), pos(rng), pos(rng), vel(rng), vel(rng), vel(rng), mass(rng)};
      if (p >= first && p < first + per_rank) std::copy(v, v + kFields, particles_.begin() + (p - first) * kFields);
    }
  }

  // Explicit particle block (x y z vx vy vz m per particle).
  NBody(int rank, int world, std::vector<double> particles)
      : rank_(rank), world_(world), particles_(std::move(particles)) {}

  void step(Communicator& comm) override {
    const auto n = particles_.size() / kFields;
    std::vector<double> acc(n * 3, 0.0);
    std::vector<double> block = particles_;
    for (int s = 0; s < world_; ++s) {
      const auto m = block.size() / kFields;
      for (std::size_t i = 0; i < n; ++i) {
        const double* pi = &particles_[i * kFields];
        for (std::size_t j = 0; j < m; ++j) {
          if (s == 0 && i == j) continue;
          const double* pj = &block[j * kFields];
          const double dx = pj[0] - pi[0], dy = pj[1] - pi[1], dz = pj[2] - pi[2];
          const double d2 = dx * dx + dy * dy + dz * dz + kSoftening * kSoftening;
          const double inv = pj[6] / (d2 * std::sqrt(d2));
          acc[i * 3] += dx * inv;
          acc[i * 3 + 1] += dy * inv;
          acc[i * 3 + 2] += dz * inv;
        }
      }
      if (s + 1 < world_) {
        const auto raw = std::as_bytes(std::span<const double>(block));
        const auto got = comm.sendrecv((rank_ + 1) % world_, raw, (rank_ - 1 + world_) % world_);
        block.resize(got.size() / sizeof(double));
        std::memcpy(block.data(), got.data(), got.size());
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double* p = &particles_[i * kFields];
      for (int k = 0; k < 3; ++k) {
        p[3 + k] += acc[i * 3 + static_cast<std::size_t>(k)] * kDt;
        p[k] += p[3 + k] * kDt;
      }
    }
  }

  std::span<double> state() override { return particles_; }

 private:
  int rank_, world_;
  std::vector<double> particles_;
};

struct AppShape {
  std::size_t heat_rows = 64, heat_cols = 64;
  std::size_t nbody_per_rank = 32;
};

inline std::unique_ptr<DemoApp> make_app(const std::string& name, int rank, int world, std::uint64_t seed,
                                         const AppShape& shape = {}) {
  if (name == "heat2d") return std::make_unique<Heat2d>(rank, world, shape.heat_rows, shape.heat_cols, seed);
  if (name == "nbody") return std::make_unique<NBody>(rank, world, shape.nbody_per_rank, seed);
  throw HarnessError("unknown app '" + name + "' (expected heat2d or nbody)");
}

}  // namespace openchk
