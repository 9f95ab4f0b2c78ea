#include "loadloop/agents/roles.hpp"

namespace loadloop::agents {

namespace {

ToolParam text(std::string name, std::string description, bool required = true) {
    return {std::move(name), "string", std::move(description), required};
}

}  // namespace

AgentProfile task_manager_profile() {
    AgentProfile p;
    p.agent_id = kTaskManager;
    p.profile_text =
        "You are the Task Manager of a load forecasting team. You talk to the user, collect what each stage "
        "needs, hand work to the other agents and keep the user informed. Hide internal details the user does "
        "not need.";
    p.workflow_text =
        "prepare.dataset: ask for the dataset path, pass it to the preparation assistant on task.prepare; ask again "
        "if loading failed.\n"
        "prepare.semantics: show the proposed column roles, ask the user to confirm, record the answer with "
        "confirm_semantics.\n"
        "prepare.task: ask for the forecast interval and horizon in hours, record them with define_task.\n"
        "prepare.clean: ask the preparation assistant to clean the data.\n"
        "prepare.metric: ask which loss to optimize, record it with set_metric.\n"
        "optimize: start the search on model.optimize. After each batch ask the user for guidance and relay it to "
        "the model manager.\n"
        "deploy: ask the deployment operator for a forecast, then ask the user for postprocessing and relay it.";
    p.actions = {
        {"ask_user", "Ask the user a question and wait for the reply.",
         {text("key", "question identifier, e.g. dataset_path"), text("question", "text shown to the user")}},
        {"delegate", "Send a message to another agent through a topic.",
         {text("topic", "target topic"), text("content", "message text")}},
        {"confirm_semantics", "Confirm the proposed column roles, or apply overrides given as a JSON object.",
         {text("answer", "the user's reply")}},
        {"define_task", "Set the forecast interval and horizon.", {text("answer", "the user's reply")}},
        {"set_metric", "Set the optimization loss.", {text("answer", "the user's reply")}},
    };
    p.subscriptions = {"user.io", "task.status", "system.error"};
    p.output_topic = "user.io";
    return p;
}

AgentProfile preparation_assistant_profile() {
    AgentProfile p;
    p.agent_id = kPreparationAssistant;
    p.profile_text =
        "You are the Preparation Assistant. You load the user's dataset, identify what each column holds and clean "
        "the series so that models can be trained on it.";
    p.workflow_text =
        "When given a path, call load_dataset. When asked to clean, call clean_dataset and report the cleaning "
        "summary.";
    p.actions = {
        {"load_dataset", "Read a CSV file and propose column roles.", {text("path", "dataset file path")}},
        {"clean_dataset", "Detect anomalies, impute gaps and split the cleaned data.", {}},
    };
    p.subscriptions = {"task.prepare"};
    p.output_topic = "task.status";
    return p;
}

AgentProfile model_manager_profile() {
    AgentProfile p;
    p.agent_id = kModelManager;
    p.profile_text =
        "You are the Model Manager. You steer the configuration search: read the trial summary, turn the user's "
        "guidance into directives, or fall back to the default strategy.";
    p.workflow_text =
        "optimize: call start_optimization when asked to begin.\n"
        "After each batch: with user guidance call plan_batch with the guidance text; without guidance call "
        "apply_default_strategy.";
    p.actions = {
        {"start_optimization", "Begin the configuration search.", {}},
        {"plan_batch", "Turn the user's guidance into directives for the next batch.",
         {text("text", "guidance text")}},
        {"apply_default_strategy", "Balance exploration across model types when the search is flat.", {}},
    };
    p.subscriptions = {"model.optimize"};
    p.output_topic = "model.execute";
    return p;
}

AgentProfile model_developer_profile() {
    AgentProfile p;
    p.agent_id = kModelDeveloper;
    p.profile_text =
        "You are the Model Developer. You build features, train the planned configurations and report their "
        "validation losses.";
    p.workflow_text = "When a batch plan arrives, call train_evaluate_batch.";
    p.actions = {
        {"train_evaluate_batch", "Train and evaluate the planned batch.", {text("note", "optional remark", false)}},
    };
    p.subscriptions = {"model.execute"};
    p.output_topic = "task.status";
    return p;
}

AgentProfile deployment_operator_profile() {
    AgentProfile p;
    p.agent_id = kDeploymentOperator;
    p.profile_text =
        "You are the Deployment Operator. You retrain the winning configuration, produce forecasts and apply the "
        "user's postprocessing rules.";
    p.workflow_text =
        "deploy: call deploy_forecast when asked. When the user sends a postprocessing rule, call apply_postprocess "
        "with it (the text none means no change).";
    p.actions = {
        {"deploy_forecast", "Retrain the best configuration and forecast.", {}},
        {"apply_postprocess", "Apply postprocessing rules given as JSON, or none.",
         {text("rule", "rule JSON object, list of rules, or none")}},
    };
    p.subscriptions = {"deploy.forecast"};
    p.output_topic = "task.status";
    return p;
}

std::vector<AgentProfile> default_profiles() {
    return {task_manager_profile(), preparation_assistant_profile(), model_manager_profile(),
            model_developer_profile(), deployment_operator_profile()};
}

}  // namespace loadloop::agents
