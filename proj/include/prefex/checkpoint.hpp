#pragma once

#include <string>
#include <string_view>

#include "prefex/environment.hpp"
#include "prefex/pipeline.hpp"

namespace prefex {

// JSON snapshot of a learner: model kind, layer sizes, particles and their
// frozen anchors, per-particle Adam state, buffer capacity and the feedback
// count that drives regularization decay. Buffer contents are not stored.
// Doubles are written in shortest round-trip form, so reloads are bit-exact.
std::string checkpoint_to_json(const AgentState& state);
AgentState checkpoint_from_json(std::string_view text);

void save_checkpoint(const AgentState& state, const std::string& path);
AgentState load_checkpoint(const std::string& path);

// Teacher network of a world.
std::string teacher_to_json(const World& world);
// Rebuilds a world from its config and a persisted teacher. Throws
// ConfigError if the teacher shape does not match the config.
World world_from_teacher_json(const WorldConfig& cfg, std::string_view text);

void save_teacher(const World& world, const std::string& path);
World load_world(const WorldConfig& cfg, const std::string& teacher_path);

}  // namespace prefex
