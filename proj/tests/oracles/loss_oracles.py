# Produces the frozen loss values used in tests/unit/test_losses.cpp.
# Independent term-by-term evaluation of the three losses (mpmath, 30 digits).
from mpmath import mp, mpf, sqrt, exp, log
mp.dps = 30
def cos(a,b):
    return sum(x*y for x,y in zip(a,b))/ (sqrt(sum(x*x for x in a))*sqrt(sum(y*y for y in b)))
def infonce(Z, pos, tau):
    n=len(Z); tot=mpf(0)
    for i in range(n):
        num=exp(cos(Z[i],Z[pos[i]])/tau)
        den=sum(exp(cos(Z[i],Z[k])/tau) for k in range(n) if k!=i)
        tot+=log(num/den)
    return -tot/n
def clip(A,B,tau):
    n=len(A); tot=mpf(0)
    for i in range(n):
        tot+=log(exp(cos(A[i],B[i])/tau)/sum(exp(cos(A[i],B[j])/tau) for j in range(n)))
        tot+=log(exp(cos(B[i],A[i])/tau)/sum(exp(cos(B[i],A[j])/tau) for j in range(n)))
    return -tot/n
r2=1/sqrt(2)
# Stage-1: 2B=4, orthonormal-basis pairs
Z=[[1,0,0,0],[r2,r2,0,0],[0,0,1,0],[0,0,r2,r2]]
print("infonce_4_tau0.07", infonce(Z,[1,0,3,2],mpf('0.07')))
print("infonce_4_tau1", infonce(Z,[1,0,3,2],mpf(1)))
# Eq4 B=3 hand vectors
V=[[1,0,0],[0,1,0],[0,0,1]]
T=[[0.8,0.6,0],[0,0.6,0.8],[0.6,0,0.8]]
print("clip_3_tau0.5", clip(V,T,mpf('0.5')))
print("clip_3_tau0.07", clip(V,T,mpf('0.07')))
# KD B=4, student == teacher
K=[[1,0,0],[0.6,0.8,0],[0,0.6,0.8],[0,0,1]]
print("kd_4_identity_tau0.07", clip(K,K,mpf('0.07')))
print("kd_4_identity_tau0.5", clip(K,K,mpf('0.5')))
# total alpha=0.3 on (V,T) and (T,K3) with K3 = rows
K3=[[1,0,0],[0,1,0],[0.6,0.8,0]]
LM=clip(V,T,mpf('0.5')); LKD=clip(T,K3,mpf('0.5'))
print("total_alpha0.3", LM+mpf('0.3')*LKD, "LM",LM,"LKD",LKD)
