/* The header compiles as C and a session runs end to end. */
#include <stdio.h>
#include <string.h>

#include "mabex/mabex.h"

int main(void) {
  mabex_session* s = NULL;
  char* out = NULL;
  if (mabex_session_open("empty-road", NULL, NULL, &s) != MABEX_OK) {
    fprintf(stderr, "open: %s\n", mabex_last_error());
    return 1;
  }
  mabex_session_command(s, "inject sensor -> c1.approachingObstacle()", NULL, &out);
  mabex_string_free(out);
  mabex_session_command(s, "inject c1 -> oc.register()", NULL, &out);
  mabex_string_free(out);
  mabex_session_command(s, "run", NULL, &out);
  mabex_string_free(out);
  int rc = mabex_session_command(s, "why last", NULL, &out) == MABEX_OK &&
                   strstr(out, "Entering is allowed because there is no indication to disallow it.") != NULL
               ? 0
               : 1;
  if (rc) fprintf(stderr, "unexpected answer: %s\n", out ? out : "(null)");
  mabex_string_free(out);
  mabex_session_close(s);
  return rc;
}
