#pragma once

#include <istream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace arim::cli {

/// CLI11 config reader/writer for JSON files. Top-level keys are options of
/// the main app; an object value holds the options of the subcommand it is
/// named after: {"threads": 2, "train": {"epochs": 5}}.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        return dump(app, default_also).dump(2) + "\n";
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        nlohmann::json j;
        try {
            input >> j;
        } catch (const nlohmann::json::exception& e) {
            throw CLI::ConversionError("config", std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config", "top level must be a JSON object");
        std::vector<CLI::ConfigItem> items;
        collect(j, {}, items);
        return items;
    }

    static nlohmann::json dump(const CLI::App* app, bool default_also) {
        nlohmann::json j = nlohmann::json::object();
        for (const CLI::Option* opt : app->get_options({})) {
            if (!opt->get_configurable() || opt->get_lnames().empty()) continue;
            const std::string& name = opt->get_lnames().front();
            if (opt->get_type_size() == 0) {
                if (opt->count() > 0) j[name] = opt->count() == 1 ? nlohmann::json(true) : nlohmann::json(opt->count());
                continue;
            }
            if (opt->count() > 0) {
                const auto& r = opt->results();
                j[name] = r.size() == 1 ? scalar(r.front()) : nlohmann::json(r);
            } else if (default_also && !opt->get_default_str().empty()) {
                j[name] = scalar(opt->get_default_str());
            }
        }
        for (const CLI::App* sub : app->get_subcommands({})) {
            if (sub->get_name().empty()) continue;
            auto s = dump(sub, default_also);
            if (!s.empty()) j[sub->get_name()] = std::move(s);
        }
        return j;
    }

private:
    static nlohmann::json scalar(const std::string& s) {
        if (s == "true" || s == "false") return s == "true";
        if (!s.empty() && (s[0] == '-' || (s[0] >= '0' && s[0] <= '9')) && nlohmann::json::accept(s)) {
            auto v = nlohmann::json::parse(s);
            if (v.is_number()) return v;
        }
        return s;
    }

    static std::string text(const nlohmann::json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        return v.dump();
    }

    static void collect(const nlohmann::json& j, const std::vector<std::string>& parents,
                        std::vector<CLI::ConfigItem>& items) {
        for (const auto& [key, value] : j.items()) {
            if (value.is_object()) {
                auto p = parents;
                p.push_back(key);
                collect(value, p, items);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array()) {
                for (const auto& v : value) item.inputs.push_back(text(v));
            } else {
                item.inputs.push_back(text(value));
            }
            items.push_back(std::move(item));
        }
    }
};

}  // namespace arim::cli
