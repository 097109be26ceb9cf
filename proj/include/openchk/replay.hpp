#pragma once

// Executes translated call plans directly against a runtime context, so an
// annotated program can be exercised without compiling its generated code.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>

#include "openchk/expr.hpp"
#include "openchk/runtime.hpp"
#include "openchk/translator.hpp"

namespace openchk {

struct ReplayMemory {
  std::span<std::byte> bytes;
  TypeCode type = TypeCode::Byte;
};

struct ReplayResult {
  bool executed = false;  // false when the guard was false
  std::optional<StoreReport> store;
  std::optional<LoadOutcome> load;
};

class Replayer {
 public:
  // `comms` names the communicators init(comm(...)) may refer to; `vars`
  // resolves identifiers in guards and id/level clauses.
  Replayer(std::map<std::string, Communicator*> comms, Config config, IntLookup vars)
      : comms_(std::move(comms)), config_(std::move(config)), vars_(std::move(vars)) {}

  void bind(const std::string& name, ReplayMemory memory) { memory_[name] = memory; }

  Context* context() { return ctx_.get(); }

  ReplayResult run(const CallPlan& plan) {
    ReplayResult result;
    if (plan.guard && evaluate_int(*plan.guard, vars_) == 0) return result;
    result.executed = true;
    try {
      for (const auto& c : plan.calls) std::visit([&](const auto& op) { step(op, result); }, c);
    } catch (...) {
      if (ctx_) ctx_->abandon();
      throw;
    }
    return result;
  }

 private:
  Context& ctx() {
    if (!ctx_) throw LifecycleError("checkpoint context not initialized");
    return *ctx_;
  }

  std::int64_t value(const ClauseValue& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
    return evaluate_int(std::get<std::string>(v), vars_);
  }

  void step(const call::CtxInit& op, ReplayResult&) {
    if (ctx_) throw LifecycleError("checkpoint context already initialized");
    auto it = comms_.find(op.comm);
    if (it == comms_.end() || !it->second) throw UnknownSymbol("unknown communicator '" + op.comm + "'");
    ctx_ = std::make_unique<Context>(*it->second, config_);
  }
  void step(const call::CtxShutdown&, ReplayResult&) { ctx().shutdown(); }
  void step(const call::BeginStore& op, ReplayResult&) {
    ctx().begin_store(value(op.id), static_cast<int>(value(op.level)), op.kind);
  }
  void step(const call::BeginLoad&, ReplayResult&) { ctx().begin_load(); }
  void step(const call::Register& op, ReplayResult&) {
    auto it = memory_.find(op.region.base);
    if (it == memory_.end()) throw UnknownSymbol("no memory bound for '" + op.region.base + "'");
    ctx().register_region(bind_described(op.region, it->second.bytes, it->second.type, op.region.base));
  }
  void step(const call::CommitStore&, ReplayResult& r) { r.store = ctx().commit_store(); }
  void step(const call::CommitLoad&, ReplayResult& r) { r.load = ctx().commit_load(); }

  std::map<std::string, Communicator*> comms_;
  Config config_;
  IntLookup vars_;
  std::map<std::string, ReplayMemory> memory_;
  std::unique_ptr<Context> ctx_;
};

}  // namespace openchk
