#pragma once

#include <string>
#include <vector>

#include "loadloop/agents/agents.hpp"

namespace loadloop::agents {

inline constexpr const char* kTaskManager = "task_manager";
inline constexpr const char* kPreparationAssistant = "preparation_assistant";
inline constexpr const char* kModelManager = "model_manager";
inline constexpr const char* kModelDeveloper = "model_developer";
inline constexpr const char* kDeploymentOperator = "deployment_operator";
// Pseudo-senders: the human side of user.io and the pipeline driver itself.
inline constexpr const char* kUser = "user";
inline constexpr const char* kSystem = "system";

AgentProfile task_manager_profile();
AgentProfile preparation_assistant_profile();
AgentProfile model_manager_profile();
AgentProfile model_developer_profile();
AgentProfile deployment_operator_profile();

// The five roles in registration order.
std::vector<AgentProfile> default_profiles();

}  // namespace loadloop::agents
