# 口罩呼吸热成像筛查
