#ifndef L2D2_FAST_TANH_H
#define L2D2_FAST_TANH_H

/* Vectorizable activation kernels; see fast_tanh.c. */
void l2d2_bias_tanh(double *z, const double *bias, long rows, long cols);
void l2d2_bias_add(double *z, const double *bias, long rows, long cols);

#endif
