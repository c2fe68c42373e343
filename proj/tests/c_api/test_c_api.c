/* SPDX-License-Identifier: Apache-2.0 */

#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "semlink/semlink.h"

static int failures = 0;

#define EXPECT(cond)                                                  \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                     \
    }                                                                 \
  } while (0)

static void count_progress(const char* line, void* user) {
  (void)line;
  ++*(int*)user;
}

static void test_scan_and_augment(const char* dir) {
  semlink_samples* scan = NULL;
  semlink_inventory* inv = NULL;
  semlink_samples* train = NULL;
  semlink_samples* test = NULL;
  char* meta = NULL;
  char* src = NULL;
  char* tgt = NULL;
  char path[1024];

  EXPECT(semlink_scan_generate(&scan) == SEMLINK_OK);
  EXPECT(semlink_samples_size(scan) == 20910);
  EXPECT(semlink_samples_get(scan, 0, &src, &tgt) == SEMLINK_OK);
  EXPECT(strlen(src) > 0 && strlen(tgt) > 0);
  semlink_string_free(src);
  semlink_string_free(tgt);
  EXPECT(semlink_samples_get(scan, 20910, &src, &tgt) == SEMLINK_E_USAGE);

  EXPECT(semlink_scan_inventory(4, 10, &inv) == SEMLINK_OK);
  EXPECT(semlink_inventory_size(inv) == 4);
  EXPECT(semlink_augment(scan, inv, "il", "standard", &train, &test, &meta) == SEMLINK_OK);
  EXPECT(semlink_samples_size(train) == 20910 + 40);
  EXPECT(semlink_samples_size(test) == 308240);
  EXPECT(strstr(meta, "\"augmentation_size\": 40") != NULL);
  semlink_string_free(meta);
  semlink_samples_free(train);
  semlink_samples_free(test);

  EXPECT(semlink_augment(scan, inv, "dl", "challenging", &train, &test, &meta) == SEMLINK_E_USAGE);
  EXPECT(strlen(semlink_last_error()) > 0);
  EXPECT(semlink_augment(scan, inv, "xl", "standard", &train, &test, &meta) == SEMLINK_E_USAGE);

  snprintf(path, sizeof path, "%s/c_api_inventory.txt", dir);
  EXPECT(semlink_inventory_save(inv, path) == SEMLINK_OK);
  semlink_inventory_free(inv);
  inv = NULL;
  EXPECT(semlink_inventory_load(path, &inv) == SEMLINK_OK);
  EXPECT(semlink_inventory_size(inv) == 4);
  EXPECT(semlink_replacement_test(scan, inv, &test) == SEMLINK_OK);
  EXPECT(semlink_samples_size(test) == 308280);
  semlink_samples_free(test);
  semlink_inventory_free(inv);
  semlink_samples_free(scan);
}

static void test_errors(void) {
  semlink_samples* s = NULL;
  EXPECT(semlink_samples_load("/nonexistent/file.tsv", &s) == SEMLINK_E_DATA);
  EXPECT(strcmp(semlink_last_error_kind(), "io") == 0);
  EXPECT(s == NULL);
  EXPECT(semlink_samples_load(NULL, &s) == SEMLINK_E_USAGE);
  EXPECT(semlink_scan_generate(NULL) == SEMLINK_E_USAGE);
  EXPECT(semlink_samples_size(NULL) == 0);
  semlink_samples_free(NULL);
  semlink_model_free(NULL);
  semlink_string_free(NULL);
}

static void test_sql_and_model(const char* fixtures, const char* dir) {
  char corpus[1024];
  char path[1024];
  char ckpt[1024];
  semlink_samples* samples = NULL;
  semlink_inventory* inv = NULL;
  semlink_samples* rules = NULL;
  semlink_model* model = NULL;
  semlink_model* loaded = NULL;
  char* metrics = NULL;
  char* pred = NULL;
  char* scores = NULL;
  char* hex = NULL;
  char* hex2 = NULL;
  char* cfg = NULL;
  FILE* f;
  int progress = 0;

  snprintf(corpus, sizeof corpus, "%s/geo_fixture.json", fixtures);
  EXPECT(semlink_derive_sql(corpus, "geo", 0, 0, &samples, &inv) == SEMLINK_OK);
  EXPECT(semlink_inventory_size(inv) == 4);
  EXPECT(semlink_samples_size(samples) > 20);
  EXPECT(semlink_derive_sql(corpus, "atis", 0, 0, &samples, &inv) == SEMLINK_E_USAGE);
  EXPECT(semlink_entity_rules(corpus, samples, &rules) == SEMLINK_OK);
  EXPECT(semlink_samples_size(rules) > 0);
  semlink_samples_free(rules);

  EXPECT(semlink_model_config_resolve("{\"preset\": \"full\"}", &cfg) == SEMLINK_OK);
  EXPECT(strstr(cfg, "\"embed_dim\":") != NULL);
  semlink_string_free(cfg);
  EXPECT(semlink_model_config_resolve("{\"batch_size\": 0}", &cfg) == SEMLINK_E_USAGE);

  EXPECT(semlink_model_train(samples, "{\"max_epochs\": 2, \"embed_dim\": 16, "
                                      "\"enc_hidden_per_dir\": 16, \"dec_hidden\": 32, "
                                      "\"attn_dim\": 16}",
                             count_progress, &progress, &model) == SEMLINK_OK);
  EXPECT(progress == 2);
  EXPECT(semlink_model_parameter_count(model) > 0);
  EXPECT(semlink_model_evaluate(model, samples, 0, &metrics) == SEMLINK_OK);
  EXPECT(strstr(metrics, "\"seq_acc\":") != NULL);
  semlink_string_free(metrics);

  snprintf(ckpt, sizeof ckpt, "%s/c_api_model.ckpt", dir);
  EXPECT(semlink_model_save(model, ckpt) == SEMLINK_OK);
  EXPECT(semlink_model_load(ckpt, &loaded) == SEMLINK_OK);
  EXPECT(semlink_model_predict(model, samples, 0, &pred) == SEMLINK_OK);
  {
    char* pred2 = NULL;
    EXPECT(semlink_model_predict(loaded, samples, 0, &pred2) == SEMLINK_OK);
    EXPECT(strcmp(pred, pred2) == 0);
    semlink_string_free(pred2);
  }

  /* Scoring a prediction file against itself is perfect. */
  snprintf(path, sizeof path, "%s/c_api_pred.tsv", dir);
  f = fopen(path, "wb");
  EXPECT(f != NULL);
  if (f) {
    fputs(pred, f);
    fclose(f);
  }
  EXPECT(semlink_score_files(path, path, &scores) == SEMLINK_OK);
  EXPECT(strstr(scores, "\"seq_acc\": 1.0") != NULL);
  semlink_string_free(scores);
  semlink_string_free(pred);

  EXPECT(semlink_file_digest(ckpt, &hex) == SEMLINK_OK);
  EXPECT(strlen(hex) == 16);
  EXPECT(semlink_model_save(loaded, path) == SEMLINK_OK);
  EXPECT(semlink_file_digest(path, &hex2) == SEMLINK_OK);
  EXPECT(strcmp(hex, hex2) == 0);
  semlink_string_free(hex);
  semlink_string_free(hex2);

  EXPECT(semlink_model_train(samples, "{\"learning_rate\": 1e30, \"max_epochs\": 4}", NULL, NULL,
                             &loaded) == SEMLINK_E_NUMERIC);
  EXPECT(strcmp(semlink_last_error_kind(), "non_finite_loss") == 0);

  semlink_model_free(model);
  semlink_inventory_free(inv);
  semlink_samples_free(samples);
}

static void test_plans(void) {
  char* resolved = NULL;
  EXPECT(semlink_plan_resolve("{\"id\": \"p\", \"scheme\": \"dl\"}", &resolved) == SEMLINK_OK);
  EXPECT(strstr(resolved, "\"scheme\":\"dl\"") != NULL);
  semlink_string_free(resolved);
  EXPECT(semlink_plan_resolve("{\"seeds\": []}", &resolved) == SEMLINK_E_USAGE);
  EXPECT(semlink_plan_resolve("not json", &resolved) == SEMLINK_E_DATA);
  EXPECT(semlink_sweep_resolve("[{\"id\": \"a\"}, {\"id\": \"b\"}]", &resolved) == SEMLINK_OK);
  semlink_string_free(resolved);
}

int main(int argc, char** argv) {
  const char* dir = argc > 2 ? argv[2] : ".";
  if (argc < 2) {
    fprintf(stderr, "usage: %s FIXTURE_DIR [SCRATCH_DIR]\n", argv[0]);
    return 2;
  }
  EXPECT(strlen(semlink_version()) > 0);
  test_scan_and_augment(dir);
  test_errors();
  test_sql_and_model(argv[1], dir);
  test_plans();
  if (failures) {
    fprintf(stderr, "%d check(s) failed\n", failures);
    return 1;
  }
  printf("c api: all checks passed\n");
  return 0;
}
