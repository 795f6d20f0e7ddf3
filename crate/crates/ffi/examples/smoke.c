/* Scores the Brucella pair through the C ABI and prints the pooled counts. */
#include <stdio.h>
#include <string.h>

#include "citefn.h"

static const char *GOLD =
    "{\"pair_id\":\"brucella\",\"origin\":\"consensus\",\"data_accessed\":true,"
    "\"use_cases\":[\"Used in a comparative study of Brucella genomes\"],"
    "\"tools\":[\"COG\",\"BLAST\",\"MUMmer\"]}";
static const char *MACHINE =
    "{\"pair_id\":\"brucella\",\"origin\":\"machine\",\"data_accessed\":true,"
    "\"use_cases\":[\"comparative analysis of genomic features\",\"suffix tree analysis using MUMmer\"],"
    "\"tools\":[\"BLAST\",\"MUMmer\",\"GLIMMER\"]}";
static const char *DECISIONS =
    "{\"pair_id\":\"brucella\","
    "\"verdicts\":[{\"kind\":\"false_negative\",\"category\":\"tools\",\"gold\":\"COG\"},"
    "{\"kind\":\"false_positive\",\"category\":\"tools\",\"machine\":\"GLIMMER\"}],"
    "\"aggregations\":[{\"pair_id\":\"brucella\",\"category\":\"use_cases\","
    "\"direction\":\"machine-into-gold\",\"decided_by\":\"r1\",\"members\":["
    "{\"side\":\"gold\",\"value\":\"Used in a comparative study of Brucella genomes\"},"
    "{\"side\":\"machine\",\"value\":\"comparative analysis of genomic features\"},"
    "{\"side\":\"machine\",\"value\":\"suffix tree analysis using MUMmer\"}]}]}";

static int fail(const char *what) {
    char *msg = citefn_last_error_message();
    fprintf(stderr, "%s: %s\n", what, msg ? msg : "(no message)");
    citefn_string_free(msg);
    return 1;
}

int main(void) {
    CitefnEvaluation *ev = NULL;
    if (citefn_evaluation_new(GOLD, MACHINE, &ev) != CITEFN_STATUS_OK) return fail("new");
    if (citefn_evaluation_apply(ev, DECISIONS) != CITEFN_STATUS_OK) return fail("apply");

    CitefnCounts per[3];
    if (citefn_evaluation_score(ev, per) != CITEFN_STATUS_OK) return fail("score");
    CitefnCounts total = {0, 0, 0, 0};
    for (int i = 0; i < 3; i++) {
        total.tp += per[i].tp;
        total.fp += per[i].fp;
        total.tn += per[i].tn;
        total.fn_ += per[i].fn_;
    }
    CitefnMetrics m = citefn_compute_metrics(total);
    printf("tp=%llu fn=%llu fp=%llu P=%.3f R=%.3f\n", (unsigned long long)total.tp,
           (unsigned long long)total.fn_, (unsigned long long)total.fp, m.precision, m.recall);

    char *text = NULL;
    if (citefn_extract_text("<article><body><p>A.</p><p>B.</p></body></article>", NULL, &text) !=
        CITEFN_STATUS_OK)
        return fail("extract");
    int ok = strcmp(text, "A.\n\nB.") == 0;
    citefn_string_free(text);
    citefn_evaluation_free(ev);
    return ok ? 0 : 1;
}
