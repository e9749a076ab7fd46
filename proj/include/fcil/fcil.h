/*
 * Copyright 2026 The fcilsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FCIL_FCIL_H_
#define FCIL_FCIL_H_

#include <stddef.h>

#if defined(_WIN32)
#define FCIL_API __declspec(dllexport)
#else
#define FCIL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fcil_status {
  FCIL_OK = 0,
  FCIL_INVALID_ARGUMENT = 1,
  FCIL_CONFIG = 2,
  FCIL_RUNTIME = 3,
  FCIL_IO = 4,
  FCIL_PARSE = 5,
  FCIL_SHAPE = 6
} fcil_status;

typedef struct fcil_config fcil_config;
typedef struct fcil_experiment fcil_experiment;

FCIL_API const char* fcil_version(void);

/* Message of the last failed call on this thread; "" if none. */
FCIL_API const char* fcil_last_error(void);

/* Frees strings returned through char** out-parameters. */
FCIL_API void fcil_string_free(char* s);

FCIL_API fcil_status fcil_config_new_default(fcil_config** out);
FCIL_API fcil_status fcil_config_load(const char* path, fcil_config** out);
FCIL_API fcil_status fcil_config_parse(const char* text, fcil_config** out);
FCIL_API void fcil_config_free(fcil_config* config);

FCIL_API fcil_status fcil_config_set(fcil_config* config, const char* key, const char* value);
FCIL_API fcil_status fcil_config_get(const fcil_config* config, const char* key, char** out);
FCIL_API fcil_status fcil_config_validate(const fcil_config* config);
FCIL_API fcil_status fcil_config_to_text(const fcil_config* config, int with_comments, char** out);

/* Registry of config keys, in file order. Returned strings are static. */
FCIL_API size_t fcil_config_key_count(void);
FCIL_API const char* fcil_config_key_name(size_t index);
FCIL_API const char* fcil_config_key_help(size_t index);
FCIL_API int fcil_config_key_required(size_t index);

/* Runs the experiment and writes the output directory. */
FCIL_API fcil_status fcil_run(const fcil_config* config, fcil_experiment** out);
FCIL_API double fcil_experiment_final_accuracy(const fcil_experiment* exp);
FCIL_API double fcil_experiment_avg_accuracy(const fcil_experiment* exp);
FCIL_API size_t fcil_experiment_stage_count(const fcil_experiment* exp);
FCIL_API const char* fcil_experiment_output_dir(const fcil_experiment* exp);
FCIL_API const char* fcil_experiment_aggregation(const fcil_experiment* exp);
FCIL_API void fcil_experiment_free(fcil_experiment* exp);

/* JSON text of per-stage client x class counts. */
FCIL_API fcil_status fcil_partition_report(const fcil_config* config, char** json_out);

/* which: "ortho" | "prototypes" | "weights". record_path may be the run directory. */
FCIL_API fcil_status fcil_diagnose(const char* record_path, const char* which, char** csv_out);

FCIL_API fcil_status fcil_sweep(const fcil_config* config, const char* axis,
                                const char* const* values, size_t value_count, char** csv_out);

#ifdef __cplusplus
}
#endif

#endif /* FCIL_FCIL_H_ */
