#include <stdio.h>
#include "matting.h"

int main(int argc, char **argv) {
    if (argc != 4) {
        fprintf(stderr, "usage: %s IMAGE TRIMAP OUT\n", argv[0]);
        return 2;
    }
    MattingImage *image = NULL, *trimap = NULL, *alpha = NULL;
    MattingSolveInfo info;
    MattingStatus st = matting_image_load(argv[1], MATTING_COLOR_RGB, &image);
    if (st == MATTING_STATUS_OK) st = matting_image_load(argv[2], MATTING_COLOR_GRAY, &trimap);
    if (st == MATTING_STATUS_OK) {
        MattingAlphaOptions opts = matting_alpha_options_default();
        st = matting_estimate_alpha(image, trimap, &opts, &alpha, &info);
    }
    if (st == MATTING_STATUS_OK) st = matting_image_save(alpha, argv[3]);
    if (st != MATTING_STATUS_OK) {
        fprintf(stderr, "error %d: %s\n", (int)st, matting_last_error_message());
    } else {
        printf("matting %s: %zu iterations, converged %d\n", matting_version(), info.iterations, info.converged);
    }
    matting_image_free(alpha);
    matting_image_free(trimap);
    matting_image_free(image);
    return st == MATTING_STATUS_OK ? 0 : 1;
}
