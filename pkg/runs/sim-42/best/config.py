LATENT_ID = 38
