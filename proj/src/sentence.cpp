#include "visent/sentence.hpp"

#include <string>

#include "visent/errors.hpp"

namespace visent {

const char* to_string(ContextType c) {
    switch (c) {
        case ContextType::I: return "I";
        case ContextType::II: return "II";
        case ContextType::III: return "III";
        case ContextType::IV: return "IV";
    }
    return "?";
}

ContextType parse_context(const std::string& name) {
    if (name == "I") return ContextType::I;
    if (name == "II") return ContextType::II;
    if (name == "III") return ContextType::III;
    if (name == "IV") return ContextType::IV;
    throw ConfigError("unknown context type: " + name);
}

ModalityPlan context_row(ContextType c) {
    const Modality V = Modality::video, I = Modality::image;
    switch (c) {
        case ContextType::I: return {V, V, V, V};
        case ContextType::II: return {I, I, I, I};
        case ContextType::III: return {I, I, V, V};
        case ContextType::IV: return {I, V, I, V};
    }
    return {I, I, I, I};
}

Modality slot_modality(ContextType c, int pos, int shots) {
    if (pos < 0 || pos >= shots) throw InvariantError("slot position out of range");
    const auto row = context_row(c);
    const int pair = pos / 2;
    const int within = pos % 2;
    return pair == 0 ? row[static_cast<size_t>(within)] : row[static_cast<size_t>(2 + within)];
}

std::vector<ContextType> applicable_contexts(TaskKind kind) {
    if (is_camera_task(kind)) return {ContextType::I, ContextType::IV};
    return {ContextType::I, ContextType::II, ContextType::III};
}

const char* to_string(Role r) {
    switch (r) {
        case Role::example_in: return "example_in";
        case Role::example_out: return "example_out";
        case Role::query_in: return "query_in";
        case Role::target: return "target";
    }
    return "?";
}

namespace {

Role role_for(int pos, int shots) {
    if (pos == shots - 1) return Role::target;
    if (pos == shots - 2) return Role::query_in;
    return pos % 2 == 0 ? Role::example_in : Role::example_out;
}

void check_slot(const Clip& clip, ContextType context, int pos, int shots) {
    const Modality want = slot_modality(context, pos, shots);
    if (clip.modality != want)
        throw ConfigError("sentence position " + std::to_string(pos) + " expects " +
                          to_string(want) + " but got " + to_string(clip.modality));
}

}  // namespace

VisualSentence compose(const std::vector<TaskSample>& samples, ContextType context,
                       ShotConfig shots) {
    if (shots.shots != 4 && shots.shots != 6 && shots.shots != 8)
        throw ConfigError("shots must be 4, 6 or 8");
    const size_t needed = static_cast<size_t>(shots.pair_count() - 1);
    if (samples.size() < std::max<size_t>(needed, 1))
        throw ConfigError("compose: need " + std::to_string(std::max<size_t>(needed, 1)) +
                          " samples for " + std::to_string(shots.shots) + " shots");

    VisualSentence s;
    s.context_type = context;
    s.shot_config = shots;
    s.direction = samples[0].direction;
    s.kind = samples[0].kind;

    std::vector<const Clip*> ordered;
    ordered.push_back(&samples[0].a);
    ordered.push_back(&samples[0].a_prime);
    ordered.push_back(&samples[0].b);
    ordered.push_back(&samples[0].b_prime);
    for (size_t i = 1; i < needed; ++i) {
        if (samples[i].kind != s.kind || samples[i].direction != s.direction)
            throw ConfigError("compose: samples mix tasks or directions");
        ordered.push_back(&samples[i].b);
        ordered.push_back(&samples[i].b_prime);
    }

    for (int pos = 0; pos < shots.shots; ++pos) {
        const Clip& clip = *ordered[static_cast<size_t>(pos)];
        check_slot(clip, context, pos, shots.shots);
        s.clips.push_back({role_for(pos, shots.shots), clip});
    }
    validate_sentence(s);
    return s;
}

VisualSentence reverse(const VisualSentence& sentence) {
    if (sentence.shot_config.shots != 4)
        throw ConfigError("reverse is defined for 4-shot sentences");
    VisualSentence out;
    out.context_type = sentence.context_type;
    out.shot_config = sentence.shot_config;
    out.kind = sentence.kind;
    out.direction = sentence.direction == Direction::understanding ? Direction::generation
                                                                   : Direction::understanding;
    const auto& c = sentence.clips;
    out.clips.push_back({Role::example_in, c[1].clip});
    out.clips.push_back({Role::example_out, c[0].clip});
    out.clips.push_back({Role::query_in, c[3].clip});
    out.clips.push_back({Role::target, c[2].clip});
    return out;
}

int total_frames(const VisualSentence& sentence) {
    int n = 0;
    for (const auto& rc : sentence.clips) n += rc.clip.frame_count();
    return n;
}

void validate_sentence(const VisualSentence& sentence) {
    const int shots = sentence.shot_config.shots;
    if (static_cast<int>(sentence.clips.size()) != shots)
        throw InvariantError("sentence clip count does not match shot config");
    int targets = 0;
    for (size_t i = 0; i < sentence.clips.size(); ++i) {
        const auto& rc = sentence.clips[i];
        if (rc.role == Role::target) {
            targets += 1;
            if (i + 1 != sentence.clips.size())
                throw InvariantError("target clip must be final");
        }
        if (!rc.clip.same_shape(rc.clip)) continue;
        if (rc.clip.height != sentence.clips[0].clip.height ||
            rc.clip.width != sentence.clips[0].clip.width)
            throw InvariantError("sentence clips must share height and width");
    }
    if (targets != 1) throw InvariantError("sentence must contain exactly one target");
}

}  // namespace visent
