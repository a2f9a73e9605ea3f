# Portfolio modules
