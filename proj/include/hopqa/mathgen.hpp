#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hopqa/util.hpp"

namespace hopqa::gateway {
class Gateway;
}

namespace hopqa::mathgen {

inline const std::vector<std::string> kRoles = {"Solvix",    "ProbMaster",  "PrimeArchitect",
                                                "Validata",  "RefineMaster", "ExploreEnhancer"};

struct FinalAnswer {
  double value = 0.0;
  std::string units;
  friend bool operator==(const FinalAnswer&, const FinalAnswer&) = default;
};

struct TraceEntry {
  std::string role;
  std::string prompt_sha256;
  std::string output_sha256;
  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

struct MathProblem {
  std::string id;
  std::string statement;
  std::vector<std::string> solution_steps;
  std::optional<FinalAnswer> final_answer;
  std::vector<std::string> topic_tags;
  std::string validation_status = "unvalidated";  // unvalidated, valid, rejected
  std::vector<TraceEntry> agent_trace;
  std::vector<std::string> feedback;
  bool oracle_verified = false;
  std::string review = "pending";

  friend bool operator==(const MathProblem&, const MathProblem&) = default;
};

std::string problem_id(const MathProblem& p);
// Lowercased word-token set of the statement.
std::vector<std::string> similarity_key(const MathProblem& p);

json to_json(const MathProblem& p);
MathProblem problem_from_json(const json& j);
std::vector<std::string> validate_problem_json(const json& j);
std::vector<MathProblem> read_problems(const std::filesystem::path& path);
void write_problems(const std::filesystem::path& path, const std::vector<MathProblem>& problems);

// Agent reply blocks: "Statement: ...", "Solution:" with numbered steps,
// "Final answer: <number> <units>". Missing parts stay empty.
struct Block {
  std::string statement;
  std::vector<std::string> steps;
  std::optional<FinalAnswer> final_answer;
};
Block parse_block(const std::string& reply);
std::optional<FinalAnswer> parse_final_answer(std::string_view text);

// --- Numeric oracle ---------------------------------------------------------

enum class Target { user1_rate, user2_rate, sum_rate, optimal_beta };

struct OracleTemplate {
  double bandwidth = 1.0;
  std::optional<double> g1, g2;          // explicit two-user scenario
  std::optional<double> total_gain, r_min;  // power-split scenario
  Target target = Target::user2_rate;
};

// Recognizes two-user NOMA statements that give g1/g2 (or G and R_min) and
// ask for a user rate, the sum rate, or the optimal power split.
std::optional<OracleTemplate> parse_template(std::string_view statement);
std::optional<double> oracle_value(const OracleTemplate& t);

struct NumericCheck {
  bool applicable = false;
  bool pass = false;
  double expected = 0.0;
  std::string feedback;
};

inline constexpr double kRelativeTolerance = 1e-6;
NumericCheck numeric_check(std::string_view statement, const std::optional<FinalAnswer>& answer);

// Shortest decimal that round-trips, always with a fractional part ("1.0").
std::string format_number(double v);

// --- Workflow ---------------------------------------------------------------

enum class Mode { direct, solution_first };
std::string to_string(Mode m);
Mode mode_from_string(std::string_view s);  // accepts "solution-first"

struct WorkflowOptions {
  std::map<std::string, std::string> backends;  // role -> backend id
  std::string default_backend;
  int max_rounds = 3;
  bool enhance = false;        // run ExploreEnhancer once after drafting
  bool probmaster_draft = false;  // direct mode drafts with ProbMaster
  int max_tokens = 512;
  std::uint64_t seed = 0;
};

struct Verdict {
  bool valid = false;
  std::string feedback;
  bool oracle_verified = false;
};

class Workflow {
 public:
  Workflow(gateway::Gateway& gw, WorkflowOptions options);

  MathProblem run(Mode mode, const std::string& topic, int instance = 0);
  // Numeric oracle and Validata judge; valid iff both pass.
  Verdict validate(MathProblem& p, int round);

 private:
  std::string call(MathProblem& p, const std::string& role, const std::string& template_id,
                   const std::map<std::string, std::string, std::less<>>& bindings, int sample);
  std::string backend_for(const std::string& role) const;

  gateway::Gateway& gw_;
  WorkflowOptions options_;
};

// Greedy retention in id order; a problem is dropped when its token-set
// Jaccard with any retained problem is >= threshold.
std::vector<MathProblem> similarity_filter(std::vector<MathProblem> problems, double threshold);
double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

}  // namespace hopqa::mathgen
