#pragma once

#include <vector>

#include "visent/tasks.hpp"

namespace visent {

// The four context layouts. Row entries are the modalities of the example
// pair (A, A') and the query pair (B, B').
enum class ContextType { I, II, III, IV };

const char* to_string(ContextType c);
ContextType parse_context(const std::string& name);

ModalityPlan context_row(ContextType c);

// Modality of sentence position `pos` for a sentence of `shots` clips.
// Sentences longer than four shots repeat the row's query-pair pattern for
// every added pair (C, C'), (D, D').
Modality slot_modality(ContextType c, int pos, int shots);

// Contexts a task is trained and evaluated under: camera movement uses
// {I, IV}, every other task {I, II, III}.
std::vector<ContextType> applicable_contexts(TaskKind kind);

struct ShotConfig {
    int shots = 4;
    int pair_count() const { return shots / 2; }
};

enum class Role { example_in, example_out, query_in, target };
const char* to_string(Role r);

struct RoleClip {
    Role role = Role::example_in;
    Clip clip;
};

struct VisualSentence {
    std::vector<RoleClip> clips;  // target last, exactly once
    ContextType context_type = ContextType::II;
    ShotConfig shot_config;
    Direction direction = Direction::understanding;
    TaskKind kind = TaskKind::depth_map;

    const Clip& target() const { return clips.back().clip; }
    Clip& target() { return clips.back().clip; }
};

// Orders sample pairs into (A, A', B, B', ...). The first sample supplies
// both of its pairs; each further sample contributes its query pair.
// Validates every slot's modality against the (extended) context row.
VisualSentence compose(const std::vector<TaskSample>& samples, ContextType context,
                       ShotConfig shots);

// Pairwise swap (A,A',B,B') -> (A',A,B',B): toggles direction, re-tags roles
// so the new final clip is the target. Defined for 4-shot sentences.
VisualSentence reverse(const VisualSentence& sentence);

int total_frames(const VisualSentence& sentence);

void validate_sentence(const VisualSentence& sentence);

}  // namespace visent
