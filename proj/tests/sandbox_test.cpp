// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "kernelforge/digest.hpp"
#include "kernelforge/fallback.hpp"
#include "kernelforge/reward.hpp"
#include "kernelforge/sandbox.hpp"
#include "kernelforge/task_io.hpp"
#include "kernelforge/tools.hpp"
#include "kernelforge/workspace.hpp"
#include "isolation_fuzz.hpp"
#include "test_util.hpp"

namespace kernelforge {
namespace {

using namespace kftest;
using nlohmann::json;

class WorkspaceTest : public ::testing::Test {
 protected:
  WorkspaceTest() : dir_("ws"), ws_(init_workspace(diag_matmul_task("ws", 8, 8), default_skill_asset(), dir_.path() / "root")) {}

  Observation call(ToolSession& s, const std::string& tool, json args) {
    return s.dispatch({tool, std::move(args)});
  }

  TempDir dir_;
  Workspace ws_;
};

TEST_F(WorkspaceTest, LayoutIsMaterialized) {
  for (auto entry : kWorkspaceLayout) {
    EXPECT_TRUE(std::filesystem::exists(ws_.root / std::string(entry))) << entry;
  }
  EXPECT_TRUE(std::filesystem::exists(ws_.root / "utils/compile.sh"));
  EXPECT_TRUE(std::filesystem::exists(ws_.root / "utils/verification.py"));
  EXPECT_TRUE(std::filesystem::exists(ws_.root / "utils/profiling.py"));
  EXPECT_EQ(read_text_file(ws_.root / "SKILL.md"), std::string(default_skill_asset()));
  EXPECT_NE(read_text_file(ws_.root / "model.py").find("diag"), std::string::npos);
}

TEST_F(WorkspaceTest, PermissionTable) {
  auto write = [&](const std::string& p) { return check_permission(ws_, p, AccessMode::kWrite); };
  EXPECT_TRUE(write("kernels/a.cu").allowed);
  EXPECT_TRUE(write("kernels/sub/b_binding.cpp").allowed);
  EXPECT_TRUE(write("model_new.py").allowed);
  EXPECT_EQ(write("utils/compile.sh").reason, "protected utility");
  EXPECT_EQ(write("binding.cpp").reason, "fixed infrastructure");
  EXPECT_EQ(write("binding_registry.h").reason, "fixed infrastructure");
  EXPECT_EQ(write("model.py").reason, "reference model is read-only");
  EXPECT_EQ(write("SKILL.md").reason, "skill document is read-only");
  EXPECT_EQ(write("kernels").reason, "layout directory cannot be replaced");
  EXPECT_EQ(write(".").reason, "workspace root is read-only");
  EXPECT_EQ(write("notes.txt").reason, "read-only path");
  EXPECT_EQ(write("../outside").reason, "escape");
  EXPECT_EQ(write("kernels/../../outside").reason, "escape");
  EXPECT_EQ(write("/etc/passwd").reason, "escape");
  EXPECT_EQ(write("kernels/../utils/compile.sh").reason, "protected utility");
  EXPECT_TRUE(check_permission(ws_, "model.py", AccessMode::kRead).allowed);
  EXPECT_FALSE(check_permission(ws_, "/etc/hostname", AccessMode::kRead).allowed);
}

TEST_F(WorkspaceTest, SymlinkCannotEscape) {
  std::filesystem::create_directory_symlink(dir_.path(), ws_.root / "kernels" / "link");
  EXPECT_EQ(check_permission(ws_, "kernels/link/x", AccessMode::kWrite).reason, "escape");
}

TEST_F(WorkspaceTest, DigestsTrackSources) {
  const auto before = source_digest(ws_);
  const auto tree = tree_digest(ws_.root);
  std::ofstream(ws_.root / "kernels" / "k.cu") << "__global__ void k() {}\n";
  EXPECT_NE(source_digest(ws_), before);
  EXPECT_NE(tree_digest(ws_.root), tree);
}

TEST_F(WorkspaceTest, ReadWriteEditCycle) {
  ToolSession s(ws_);
  auto o = call(s, "Write", {{"file_path", "kernels/a.cu"}, {"content", "int x = 1;\nint y = 2;\n"}});
  EXPECT_FALSE(o.error) << o.text;
  o = call(s, "Edit", {{"file_path", "kernels/a.cu"}, {"old_string", "x = 1"}, {"new_string", "x = 3"}});
  EXPECT_FALSE(o.error) << o.text;  // files written this session count as read
  o = call(s, "Read", {{"file_path", "kernels/a.cu"}});
  EXPECT_NE(o.text.find("     1\tint x = 3;"), std::string::npos) << o.text;
  o = call(s, "MultiEdit", {{"file_path", "kernels/a.cu"},
                            {"edits", {{{"old_string", "y = 2"}, {"new_string", "y = 4"}},
                                       {{"old_string", "zzz"}, {"new_string", "q"}}}}});
  EXPECT_TRUE(o.error);
  EXPECT_NE(o.text.find("no edits applied"), std::string::npos);
  EXPECT_EQ(read_text_file(ws_.root / "kernels/a.cu"), "int x = 3;\nint y = 2;\n");
}

TEST_F(WorkspaceTest, ReadBeforeWrite) {
  ToolSession s(ws_);
  auto o = call(s, "Write", {{"file_path", "model_new.py"}, {"content", "x"}});
  EXPECT_TRUE(o.error);
  EXPECT_NE(o.text.find("read-before-write"), std::string::npos);
  call(s, "Read", {{"file_path", "model_new.py"}});
  EXPECT_FALSE(call(s, "Write", {{"file_path", "model_new.py"}, {"content", "x"}}).error);
}

TEST_F(WorkspaceTest, DeniedWritesLeaveFilesUntouched) {
  ToolSession s(ws_);
  const auto digest = tree_digest(ws_.root);
  call(s, "Read", {{"file_path", "model.py"}});
  auto o = call(s, "Write", {{"file_path", "model.py"}, {"content", "pwned"}});
  EXPECT_TRUE(o.permission_denied);
  o = call(s, "Edit", {{"file_path", "utils/compile.sh"}, {"old_string", "a"}, {"new_string", "b"}});
  EXPECT_TRUE(o.error);
  o = call(s, "Bash", {{"command", "echo hi > utils/compile.sh; rm -rf utils; touch ../x"}});
  EXPECT_NE(o.text.find("permission denied (protected utility)"), std::string::npos) << o.text;
  EXPECT_NE(o.text.find("touch: ../x: permission denied (escape)"), std::string::npos) << o.text;
  EXPECT_EQ(tree_digest(ws_.root), digest);
  EXPECT_FALSE(std::filesystem::exists(dir_.path() / "x"));
}

TEST_F(WorkspaceTest, SchemaViolations) {
  ToolSession s(ws_);
  EXPECT_TRUE(call(s, "Teleport", {{"to", "x"}}).schema_violation);
  EXPECT_TRUE(call(s, "Read", json::object()).schema_violation);
  EXPECT_TRUE(call(s, "Read", {{"file_path", 3}}).schema_violation);
  EXPECT_TRUE(call(s, "Read", {{"file_path", "model.py"}, {"bogus", 1}}).schema_violation);
  EXPECT_FALSE(call(s, "Read", {{"file_path", "model.py"}, {"limit", 2}}).schema_violation);
}

TEST_F(WorkspaceTest, GlobAndGrep) {
  ToolSession s(ws_);
  call(s, "Write", {{"file_path", "kernels/a/b.cu"}, {"content", "alpha\nbeta\n"}});
  auto o = call(s, "Glob", {{"pattern", "kernels/**/*.cu"}});
  EXPECT_EQ(o.text, "kernels/a/b.cu\n");
  o = call(s, "Grep", {{"pattern", "bet"}, {"path", "kernels"}});
  EXPECT_NE(o.text.find("kernels/a/b.cu:2:beta"), std::string::npos) << o.text;
  o = call(s, "Grep", {{"pattern", "ALPHA"}, {"-i", true}, {"output_mode", "files_with_matches"}});
  EXPECT_NE(o.text.find("kernels/a/b.cu"), std::string::npos);
  EXPECT_TRUE(glob_match("**/*.py", "utils/profiling.py"));
  EXPECT_TRUE(glob_match("**", "a/b/c"));
  EXPECT_FALSE(glob_match("*.py", "utils/profiling.py"));
}

TEST_F(WorkspaceTest, BashJail) {
  UtilityHooks hooks;
  hooks.compile = [] { return std::string("compiled\n"); };
  hooks.profiling = [] { return std::string("profiled\n"); };
  ToolSession s(ws_, hooks);
  auto bash = [&](const std::string& c) { return call(s, "Bash", {{"command", c}}).text; };
  EXPECT_EQ(bash("echo a && echo b"), "a\nb\n");
  EXPECT_EQ(bash("false || echo rescued"), "rescued\n");
  EXPECT_EQ(bash("export X=7; echo $X"), "7\n");
  EXPECT_EQ(bash("bash utils/compile.sh"), "compiled\n");
  EXPECT_EQ(bash("CUDA_VISIBLE_DEVICES=0 sudo python3 -m utils.profiling"), "profiled\n");
  EXPECT_NE(bash("curl http://example.com").find("[exit 127]"), std::string::npos);
  EXPECT_NE(bash("echo $(id)").find("bash:"), std::string::npos);
  EXPECT_NE(bash("python3 -c 'print(1)'").find("[exit 126]"), std::string::npos);
  EXPECT_EQ(bash("mkdir -p kernels/x && echo hi > kernels/x/f.txt && cat kernels/x/f.txt"), "hi\n");
  EXPECT_EQ(bash("ls kernels"), "x/\n");
  EXPECT_EQ(bash("cd /tmp; pwd"),
            "cd: working directory is pinned to the workspace root\n" + ws_.root.string() + "\n");
}

TEST_F(WorkspaceTest, BackgroundJobs) {
  ToolSession s(ws_);
  auto o = call(s, "Bash", {{"command", "echo late"}, {"run_in_background", true}});
  EXPECT_NE(o.text.find("bash_1"), std::string::npos) << o.text;
  o = call(s, "BashOutput", {{"bash_id", "bash_1"}});
  EXPECT_NE(o.text.find("late"), std::string::npos) << o.text;
  EXPECT_TRUE(call(s, "BashOutput", {{"bash_id", "bash_9"}}).error);
  EXPECT_FALSE(call(s, "KillBash", {{"shell_id", "bash_1"}}).error);
}

TEST(Observation, TruncationAndTokens) {
  Observation o;
  o.text = std::string(100, 'a');
  const auto t = truncate_observation(o, 10);
  EXPECT_TRUE(t.truncated);
  EXPECT_EQ(t.raw_bytes, 100u);
  EXPECT_EQ(t.text, std::string(10, 'a') + "\n[truncated 90 bytes]");
  EXPECT_FALSE(truncate_observation(o, 100).truncated);
  EXPECT_EQ(estimate_tokens(0), 0u);
  EXPECT_EQ(estimate_tokens(1), 1u);
  EXPECT_EQ(estimate_tokens(8), 2u);
  EXPECT_EQ(estimate_tokens(9), 3u);
}

TEST(Fallback, DetectsBannedPatterns) {
  const char* banned[] = {
      "auto y = torch::nn::functional::relu(x);",
      "return torch::matmul(a, b);",
      "at::mm(a, b);",
      "import torch.nn.functional as F",
      "y = F.relu(x)",
      "y = torch.matmul(a, b)",
      "y = a.matmul(b)",
      "s = x.sum(dim=1)",
      "self.fc = nn.Linear(4, 4)",
      "// torch::softmax(x, 1);",
  };
  for (const char* src : banned) EXPECT_TRUE(detect_fallback_violation(src).violation) << src;
  const char* allowed[] = {
      "torch::Tensor forward(torch::Tensor x) { auto y = torch::empty_like(x); return y; }",
      "auto opts = torch::kFloat32;",
      "__global__ void k(float* y) { y[0] = 1.f; }",
      "import torch\nout = kernels.fused_forward(x)",
      "at = 3;",
  };
  for (const char* src : allowed) EXPECT_FALSE(detect_fallback_violation(src).violation) << src;
  const auto scan = detect_fallback_violation("x\ny = torch.mm(a, b)");
  ASSERT_EQ(scan.matches.size(), 1u);
  EXPECT_EQ(scan.matches[0].offset, 6u);
}

TEST(Sandbox, ScriptedEpisodeOnDiagMatMul) {
  TempDir dir("episode");
  SimulatedExecutor ex;
  SandboxEnv env(diag_matmul_task(), dir.path() / "ws", ex);
  ScriptedPolicy policy;
  while (!env.state().done) env.step(policy.next(env.state()));
  const auto& st = env.state();
  EXPECT_EQ(st.done_reason, DoneReason::kPolicyStop);
  EXPECT_LE(st.turn, 12);
  ASSERT_EQ(st.reports.size(), 1u);
  EXPECT_TRUE(st.reports[0].correct);
  EXPECT_EQ(st.best_report, 0u);
  EXPECT_EQ(trajectory_reward(RewardVariant::kRobust, st.reports[0]), 3.0);
  const auto& submit = std::get<Submit>(st.history[5].action);
  ASSERT_EQ(submit.candidate.rewrites.size(), 1u);
  EXPECT_EQ(submit.candidate.rewrites[0].rule, RewriteRule::kDiagMatMulToRowScale);
  EXPECT_EQ(st.reports[0].source_digest, source_digest(env.workspace()));
  EXPECT_THROW(env.step(Stop{}), std::logic_error);
}

TEST(Sandbox, FallbackSubmissionIsRejected) {
  TempDir dir("fallback");
  SimulatedExecutor ex;
  SandboxEnv env(diag_matmul_task("d", 8, 8), dir.path() / "ws", ex);
  env.step(ToolCall{"Write", {{"file_path", "kernels/k_binding.cpp"},
                              {"content", "torch::Tensor f(torch::Tensor a) { return torch::mm(a, a); }"}}});
  const auto o = env.step(Submit{scripted_candidate(env.state().task.graph)});
  EXPECT_TRUE(o.error);
  ASSERT_EQ(env.state().reports.size(), 1u);
  EXPECT_FALSE(env.state().reports[0].correct);
  EXPECT_EQ(env.state().reports[0].failure_reason, "fallback");
  EXPECT_FALSE(env.state().best_report);
}

TEST(Sandbox, TurnAndTokenBudgets) {
  TempDir dir("budget");
  SimulatedExecutor ex;
  EnvConfig cfg;
  cfg.budgets.max_turns_train = 3;
  SandboxEnv env(diag_matmul_task("d", 8, 8), dir.path() / "ws", ex, cfg);
  for (int i = 0; i < 3; ++i) env.step(ToolCall{"Bash", {{"command", "true"}}});
  EXPECT_TRUE(env.state().done);
  EXPECT_EQ(env.state().done_reason, DoneReason::kBudget);

  EnvConfig tight;
  tight.budgets.context_tokens = 50;
  SandboxEnv env2(diag_matmul_task("d", 8, 8), dir.path() / "ws2", ex, tight);
  env2.step(ToolCall{"Read", {{"file_path", "SKILL.md"}}});
  EXPECT_EQ(env2.state().done_reason, DoneReason::kBudget);
}

class FailingExecutor final : public Executor {
 public:
  Baselines baselines(const OperatorTask&, const ExecutorConfig&) override { throw ExecutorError("down"); }
  VerifyOutcome verify(const OperatorTask&, const KernelCandidate&, const ExecutorConfig&) override {
    throw ExecutorError("down");
  }
  MeasurementReport measure(const OperatorTask&, const KernelCandidate&, const ExecutorConfig&) override {
    throw ExecutorError("down");
  }
  std::vector<Tensor> run_eager(const OperatorTask&, std::uint64_t) override { throw ExecutorError("down"); }
};

TEST(Sandbox, ExecutorFailureEndsEpisode) {
  TempDir dir("envfail");
  FailingExecutor ex;
  SandboxEnv env(diag_matmul_task("d", 8, 8), dir.path() / "ws", ex);
  env.step(Submit{});
  EXPECT_EQ(env.state().done_reason, DoneReason::kEnvError);
}

TEST(Sandbox, ActionJsonRoundTrip) {
  const Action actions[] = {ToolCall{"Read", {{"file_path", "x"}}}, Submit{scripted_candidate(diag_matmul_task().graph)},
                            Stop{}};
  for (const auto& a : actions) EXPECT_EQ(action_from_json(action_to_json(a)), a);
  EXPECT_THROW(action_from_json({{"type", "dance"}}), DataError);
}

TEST(Sandbox, IsolationFuzzSmoke) {
  const auto r = run_isolation_fuzz(300, 17);
  for (const auto& t : r.samples) ADD_FAILURE() << t;
  EXPECT_EQ(r.readonly_writes, 0);
  EXPECT_EQ(r.escapes, 0);
  EXPECT_EQ(r.fallback_misses, 0);
  EXPECT_GT(r.fallback_submits, 0);
  EXPECT_GT(r.denials, 0);
}

}  // namespace
}  // namespace kernelforge
