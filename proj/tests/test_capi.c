/* Plain C client of the public header: compiles as C and exercises error
 * reporting, config handling and a tiny train/predict/eval round trip. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "vxseg/vxseg.h"

static int failures = 0;

#define EXPECT(cond)                                                   \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "%s:%d: expectation failed: %s\n", __FILE__,     \
              __LINE__, #cond);                                        \
      ++failures;                                                      \
    }                                                                  \
  } while (0)

static int lines_seen = 0;
static void count_line(const char* line, void* user) {
  (void)line;
  (void)user;
  ++lines_seen;
}

int main(int argc, char** argv) {
  const char* root = argc > 1 ? argv[1] : "vxseg_capi_scratch";
  char data[512], out[512], ckpt[512], image[512], prob[512], mask[512], pred_dir[512];
  snprintf(data, sizeof data, "%s/data", root);
  snprintf(out, sizeof out, "%s/out", root);
  snprintf(ckpt, sizeof ckpt, "%s/out/generator.vxck", root);
  snprintf(image, sizeof image, "%s/data/case_0000_image.vxsg", root);
  snprintf(pred_dir, sizeof pred_dir, "%s/pred", root);
  snprintf(prob, sizeof prob, "%s/pred/case_0000_prob.vxsg", root);
  snprintf(mask, sizeof mask, "%s/pred/case_0000_label.vxsg", root);

  /* error reporting */
  vxseg_config* cfg = NULL;
  EXPECT(vxseg_config_parse("no_such_key = 1\n", &cfg) == VXSEG_ERR_CONTRACT);
  EXPECT(strstr(vxseg_last_error(), "no_such_key") != NULL);
  EXPECT(cfg == NULL);
  EXPECT(vxseg_config_load("/nonexistent/dir/x.cfg", &cfg) == VXSEG_ERR_IO);
  EXPECT(vxseg_config_default(NULL) == VXSEG_ERR_CONTRACT);
  vxseg_generator* g = NULL;
  EXPECT(vxseg_generator_load("/nonexistent/g.vxck", &g) == VXSEG_ERR_IO);
  EXPECT(strcmp(vxseg_status_name(VXSEG_ERR_NUMERIC), "numeric error") == 0);

  /* config */
  EXPECT(vxseg_config_default(&cfg) == VXSEG_OK);
  EXPECT(vxseg_config_update(cfg,
                             "pretrain_iterations = 2\npretrain_batch = 2\nlr_drop_at = 1\n"
                             "g_base_filters = 2\ng_encoder_levels = 2\ng_branch_levels = 2, 1, 0\n"
                             "g_fuse_filters = 2\nlog_timing = 0\n") == VXSEG_OK);
  char* text = NULL;
  EXPECT(vxseg_config_to_text(cfg, &text) == VXSEG_OK);
  EXPECT(text != NULL && strstr(text, "pretrain_iterations = 2\n") != NULL);
  EXPECT(text != NULL && strstr(text, "lambda = 0.01\n") != NULL);
  vxseg_string_free(text);
  EXPECT(vxseg_config_update(cfg, "k_D = 0\n") == VXSEG_ERR_CONTRACT);

  /* train, predict, evaluate */
  EXPECT(vxseg_synth(data, 2, 3, 16, 3.0) == VXSEG_OK);
  EXPECT(vxseg_pretrain(cfg, data, out, count_line, NULL) == VXSEG_OK);
  EXPECT(lines_seen == 2);
  EXPECT(vxseg_generator_load(ckpt, &g) == VXSEG_OK);
  char* spec = NULL;
  EXPECT(vxseg_generator_spec(g, &spec) == VXSEG_OK);
  EXPECT(spec != NULL && strstr(spec, "base_filters = 2") != NULL);
  vxseg_string_free(spec);
  double ms = -1.0;
  EXPECT(vxseg_predict_file(g, image, prob, mask, 0.5, &ms) == VXSEG_OK);
  EXPECT(ms >= 0.0);
  EXPECT(vxseg_predict_file(g, image, prob, mask, 1.5, NULL) == VXSEG_ERR_CONTRACT);
  vxseg_report* r = NULL;
  EXPECT(vxseg_evaluate(data, data, 0.5, &r) == VXSEG_OK);
  vxseg_summary dice;
  EXPECT(vxseg_report_dice(r, &dice) == VXSEG_OK);
  EXPECT(dice.mean == 1.0 && dice.min == 1.0);
  EXPECT(vxseg_report_case_count(r) == 2);
  vxseg_report_free(r);
  r = NULL;
  EXPECT(vxseg_evaluate(pred_dir, data, 0.5, &r) == VXSEG_ERR_CONTRACT);
  EXPECT(strstr(vxseg_last_error(), "case_0001") != NULL);

  /* gradcheck fault names are validated */
  vxseg_gradcheck* gc = NULL;
  EXPECT(vxseg_gradcheck_run(1, 0.0, "no_such_op", &gc) == VXSEG_ERR_CONTRACT);

  vxseg_generator_free(g);
  vxseg_config_free(cfg);
  vxseg_report_free(NULL);
  vxseg_gradcheck_free(NULL);
  if (failures == 0) printf("C API: all expectations met\n");
  return failures == 0 ? 0 : 1;
}
