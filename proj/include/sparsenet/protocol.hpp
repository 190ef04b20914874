#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "sparsenet/netstack.hpp"

namespace sparsenet {

/// Parses protocol strings like "UU", "D+D+", "Dc+D+", "R+L1R+L1". Per stage:
/// a letter R/U/D, optional subscript c (convolutional pretraining, stage 1
/// only), optional "+" (global fine-tuning), optional "L1" (sparse-state
/// supervised training).
inline Protocol parse_protocol(const std::string& text) {
    Protocol p;
    size_t i = 0;
    while (i < text.size()) {
        InitKind init;
        switch (text[i]) {
            case 'R': init.kind = InitKind::Random; break;
            case 'U': init.kind = InitKind::Unsup; break;
            case 'D': init.kind = InitKind::Disc; break;
            default:
                throw config_error("protocol: expected R, U or D at position " + std::to_string(i) +
                                   " in \"" + text + "\"");
        }
        ++i;
        if (i < text.size() && text[i] == 'c') {
            init.convolutional = true;
            ++i;
        }
        if (i < text.size() && text[i] == '+') {
            p.fine_tune = true;
            ++i;
        }
        if (i + 1 < text.size() && text[i] == 'L' && text[i + 1] == '1') {
            p.sparse_state = true;
            i += 2;
        }
        p.stage_init.push_back(init);
    }
    if (p.stage_init.empty()) throw config_error("protocol: empty string");
    if (p.sparse_state && !p.fine_tune)
        throw config_error("protocol: L1 sparse-state training requires the supervised pass (+)");
    p.validate();
    return p;
}

inline std::string protocol_to_string(const Protocol& p) {
    std::string s;
    for (const auto& init : p.stage_init) {
        s += init.kind == InitKind::Random ? 'R' : (init.kind == InitKind::Unsup ? 'U' : 'D');
        if (init.convolutional) s += 'c';
        if (p.fine_tune) s += '+';
        if (p.sparse_state) s += "L1";
    }
    return s;
}

inline bool protocol_needs_pretraining(const Protocol& p) {
    for (const auto& init : p.stage_init)
        if (init.kind != InitKind::Random) return true;
    return false;
}

/// Flat key=value config file; '#' starts a comment.
inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("config: cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(f, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            size_t b = s.find_first_not_of(" \t\r");
            size_t e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = val;
    }
    return kv;
}

}  // namespace sparsenet
