#include "cladecast.h"

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <string>
#include <utility>

#include "cladecast/pipeline.hpp"

struct cladecast_pipeline {
    cladecast::Pipeline impl;
    std::string last_error;
};

namespace {

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <typename Fn>
cladecast_status guarded(cladecast_pipeline* p, Fn&& fn) {
    if (!p) return CLADECAST_ERR_ARGUMENT;
    try {
        p->last_error.clear();
        fn();
        return CLADECAST_OK;
    } catch (const std::exception& e) {
        p->last_error = e.what();
        return CLADECAST_ERR_RUNTIME;
    } catch (...) {
        p->last_error = "unknown error";
        return CLADECAST_ERR_RUNTIME;
    }
}

}  // namespace

extern "C" {

const char* cladecast_version(void) { return "1.0.0"; }

cladecast_pipeline* cladecast_pipeline_open(const char* config_json, char** err) {
    if (err) *err = nullptr;
    if (!config_json) {
        if (err) *err = dup_string("config_json is null");
        return nullptr;
    }
    try {
        auto cfg = cladecast::PipelineConfig::from_json_text(config_json);
        return new cladecast_pipeline{cladecast::Pipeline(std::move(cfg)), {}};
    } catch (const std::exception& e) {
        if (err) *err = dup_string(e.what());
        return nullptr;
    } catch (...) {
        if (err) *err = dup_string("unknown error");
        return nullptr;
    }
}

void cladecast_pipeline_close(cladecast_pipeline* p) { delete p; }

const char* cladecast_last_error(const cladecast_pipeline* p) {
    return p ? p->last_error.c_str() : "";
}

char* cladecast_config_json(const cladecast_pipeline* p) {
    if (!p) return nullptr;
    try {
        return dup_string(p->impl.config().to_json_text());
    } catch (...) {
        return nullptr;
    }
}

cladecast_status cladecast_run_simulate(cladecast_pipeline* p) {
    return guarded(p, [p] { p->impl.simulate(); });
}

cladecast_status cladecast_run_build(cladecast_pipeline* p) {
    return guarded(p, [p] { p->impl.build(); });
}

cladecast_status cladecast_run_fit(cladecast_pipeline* p) {
    return guarded(p, [p] { p->impl.fit(); });
}

cladecast_status cladecast_run_predict(cladecast_pipeline* p) {
    return guarded(p, [p] { p->impl.predict(); });
}

cladecast_status cladecast_run_score(cladecast_pipeline* p) {
    return guarded(p, [p] { p->impl.score(); });
}

cladecast_status cladecast_run_report(cladecast_pipeline* p) {
    return guarded(p, [p] { p->impl.report(); });
}

cladecast_status cladecast_run_verify(cladecast_pipeline* p, int* problems) {
    return guarded(p, [p, problems] {
        int n = p->impl.verify(std::cout);
        if (problems) *problems = n;
    });
}

void cladecast_string_free(char* s) { std::free(s); }

}  // extern "C"
