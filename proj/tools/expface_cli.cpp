#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "expface/io/config.hpp"
#include "expface/io/run.hpp"

namespace io = expface::io;

int main(int argc, char** argv) {
    CLI::App app{"Margin-based softmax loss analysis and noisy-label simulation"};
    app.option_defaults()->always_capture_default(false);

    std::optional<std::string> command;
    std::optional<std::string> config_path;
    app.add_option("command", command,
                   "curves | gradients | transition | margin-field | gradcheck | simulate");
    app.add_option("-c,--config", config_path, "flat key = value config file");

    // One flag per config key; lists are comma separated.
    std::map<std::string, std::optional<std::string>> flags;
    for (const auto& key : io::kConfigKeys) {
        if (key.name == "command") continue;
        auto& slot = flags[std::string(key.name)];
        app.add_option("--" + std::string(key.name), slot, std::string(key.help));
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? io::kExitOk : io::kExitConfig;
    }

    io::RunConfig cfg;
    try {
        io::ConfigMap file_values;
        if (config_path) file_values = io::parse_config_text(io::read_text_file(*config_path));
        io::ConfigMap flag_values;
        if (command) flag_values.emplace("command", *command);
        for (const auto& [key, value] : flags) {
            if (value) flag_values.emplace(key, io::parse_flag_value(key, *value));
        }
        cfg = io::parse_config(file_values, flag_values);
    } catch (const expface::IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return io::kExitIo;
    } catch (const expface::Error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return io::kExitConfig;
    }
    return io::run(cfg, std::cout, std::cerr);
}
