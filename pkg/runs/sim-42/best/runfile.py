import config
import model

print(model.build(), config.LATENT_ID)
